use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delottery_core::chain::{Address, Ledger};
use delottery_core::crypto::{solve_pow, Target};
use delottery_core::harness::chi_square_uniform;
use delottery_core::lottery::{reduce_mod, LotteryConfig, LotteryState};
use delottery_core::randao::combine;

#[test]
fn last_revealer_moves_the_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1_000 {
        let n = rng.gen_range(1..10);
        let mut values: Vec<i64> = (0..n).map(|_| rng.gen()).collect();
        let round_id = rng.gen();
        let before = combine(values.iter().copied(), round_id);
        let last = values.last_mut().unwrap();
        *last = last.wrapping_add(rng.gen_range(1..=i64::MAX));
        assert_ne!(before, combine(values.iter().copied(), round_id));
    }
}

#[test]
fn output_is_uniform_mod_16() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0u64; 16];
    for round_id in 0..10_000u64 {
        let values: Vec<i64> = (0..5).map(|_| rng.gen()).collect();
        let output = combine(values, round_id);
        counts[reduce_mod(&output, 16) as usize] += 1;
    }
    let chi = chi_square_uniform(&counts).unwrap();
    assert_eq!(chi.df, 15);
    assert!(chi.pass, "statistic {}", chi.statistic);
}

/// Runs one lottery where `host` deploys; everyone else joins in the
/// given order. Keys and guesses are fixed per address.
fn play(host: usize, seeds: &[&str], keys: &[i64], guesses: &[u64]) -> (Vec<u64>, BTreeMap<Address, u128>) {
    let mut ledger = Ledger::new();
    let players: Vec<Address> = seeds
        .iter()
        .map(|s| ledger.create_account(s.as_bytes(), 1_000_000_000_000).unwrap())
        .collect();
    let config = LotteryConfig {
        pow_difficulty: Target::MAX,
        cert_cap: 10,
        ..LotteryConfig::default()
    };
    let mut state = LotteryState::deploy(&mut ledger, players[host], config, 0).unwrap();
    for (i, p) in players.iter().enumerate() {
        if i != host {
            let pow = solve_pow(state.join_challenge(p), Target::MAX);
            let votes = state.active_certifiers().iter().copied().collect();
            state.add_player(&ledger, *p, &pow, &votes, 0).unwrap();
        }
    }
    state.begin_key_upload(&mut ledger, 0).unwrap();
    for (p, k) in players.iter().zip(keys) {
        state.upload_key(&mut ledger, *p, *k, 0).unwrap();
    }
    let t = state.round().unwrap().commit_deadline() + 1;
    state.begin_betting(t).unwrap();
    for (p, g) in players.iter().zip(guesses) {
        state.buy_shares(&mut ledger, *p, &[*g], t).unwrap();
    }
    state.enter_buffer(t).unwrap();
    for (p, k) in players.iter().zip(keys) {
        state.reveal_key(*p, *k, t).unwrap();
    }
    let end = state.round().unwrap().reveal_deadline() + 1;
    let winners = state.draw(&mut ledger, end).unwrap().winners.iter().copied().collect();
    state.settle(&mut ledger).unwrap();
    let balances = players.iter().map(|p| (*p, ledger.balance(p).unwrap())).collect();
    (winners, balances)
}

#[test]
fn host_role_confers_no_advantage() {
    let seeds = ["sym-a", "sym-b", "sym-c", "sym-d"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let keys: Vec<i64> = (0..4).map(|_| rng.gen()).collect();
        let guesses: Vec<u64> = (0..4).map(|_| rng.gen_range(0..10)).collect();
        let reference = play(0, &seeds, &keys, &guesses);
        for host in 1..4 {
            assert_eq!(play(host, &seeds, &keys, &guesses), reference, "host {host}");
        }
    }
}
