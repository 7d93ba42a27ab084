use std::collections::BTreeMap;

use thiserror::Error;

use super::{Account, Address, Block, Event, EventKind, Money};
use crate::crypto::{Hash32, Target};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("seed material must be non-empty")]
    EmptySeed,
    #[error("account {0} already exists")]
    DuplicateAccount(Address),
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("insufficient balance in {account}: need {needed}, have {available}")]
    InsufficientBalance {
        account: Address,
        needed: Money,
        available: Money,
    },
    #[error("escrow `{bucket}` holds {available}, cannot release {needed}")]
    InsufficientEscrow {
        bucket: String,
        needed: Money,
        available: Money,
    },
    #[error("{0} is not a transaction node")]
    NotTransactionNode(Address),
    #[error("event {index} in pending list fails authentication")]
    BadAuthTag { index: usize },
    #[error("a block was already mined at tick {0}")]
    TickAlreadyMined(u64),
    #[error("block does not extend the chain tip")]
    StaleBlock,
}

/// Accounts, the block chain, the logical clock and every pot of money in
/// a run.
///
/// Money only ever moves between balances, named escrow buckets and the fee
/// sink, so `Σ balances + fee_sink + Σ escrow` equals the amount minted at
/// account creation.
#[derive(Debug, Clone)]
pub struct Ledger {
    accounts: BTreeMap<Address, Account>,
    chain: Vec<Block>,
    clock: u64,
    last_mined_tick: u64,
    fee_sink: Money,
    escrow: BTreeMap<String, Money>,
    minted: Money,
    next_round_id: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// A ledger holding only the genesis block (mined at tick 0).
    pub fn new() -> Self {
        let genesis = Block::mine(0, [0u8; 32], Vec::new(), Address::ZERO, Target::MAX);
        Ledger {
            accounts: BTreeMap::new(),
            chain: vec![genesis],
            clock: 0,
            last_mined_tick: 0,
            fee_sink: 0,
            escrow: BTreeMap::new(),
            minted: 0,
            next_round_id: 1,
        }
    }

    pub fn create_account(&mut self, seed_material: &[u8], initial_balance: Money) -> Result<Address, ChainError> {
        self.insert_account(seed_material, initial_balance, false)
    }

    pub fn create_transaction_node(&mut self, seed_material: &[u8]) -> Result<Address, ChainError> {
        self.insert_account(seed_material, 0, true)
    }

    fn insert_account(&mut self, seed: &[u8], balance: Money, node: bool) -> Result<Address, ChainError> {
        if seed.is_empty() {
            return Err(ChainError::EmptySeed);
        }
        let account = Account::derive(seed, balance, node);
        let address = account.address;
        if self.accounts.contains_key(&address) {
            return Err(ChainError::DuplicateAccount(address));
        }
        self.accounts.insert(address, account);
        self.minted += balance;
        Ok(address)
    }

    pub fn account(&self, address: &Address) -> Result<&Account, ChainError> {
        self.accounts
            .get(address)
            .ok_or(ChainError::UnknownAccount(*address))
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn balance(&self, address: &Address) -> Result<Money, ChainError> {
        self.account(address).map(|a| a.balance)
    }

    pub fn is_transaction_node(&self, address: &Address) -> bool {
        self.accounts
            .get(address)
            .is_some_and(|a| a.is_transaction_node)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn advance_clock(&mut self, ticks: u64) -> u64 {
        self.clock += ticks;
        self.clock
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn tip_hash(&self) -> Hash32 {
        self.chain.last().expect("genesis always present").hash
    }

    pub fn fee_sink(&self) -> Money {
        self.fee_sink
    }

    pub fn escrow(&self, bucket: &str) -> Money {
        self.escrow.get(bucket).copied().unwrap_or(0)
    }

    pub fn escrow_buckets(&self) -> &BTreeMap<String, Money> {
        &self.escrow
    }

    pub fn minted(&self) -> Money {
        self.minted
    }

    pub fn total_money(&self) -> Money {
        self.accounts.values().map(|a| a.balance).sum::<Money>()
            + self.fee_sink
            + self.escrow.values().sum::<Money>()
    }

    /// Signed difference between money currently held anywhere and money
    /// minted. Zero unless something leaked or was conjured.
    pub fn conservation_residual(&self) -> i128 {
        self.total_money() as i128 - self.minted as i128
    }

    pub fn allocate_round_id(&mut self) -> u64 {
        let id = self.next_round_id;
        self.next_round_id += 1;
        id
    }

    fn debit(&mut self, from: &Address, amount: Money) -> Result<(), ChainError> {
        let account = self
            .accounts
            .get_mut(from)
            .ok_or(ChainError::UnknownAccount(*from))?;
        if account.balance < amount {
            return Err(ChainError::InsufficientBalance {
                account: *from,
                needed: amount,
                available: account.balance,
            });
        }
        account.balance -= amount;
        Ok(())
    }

    fn credit(&mut self, to: &Address, amount: Money) -> Result<(), ChainError> {
        let account = self
            .accounts
            .get_mut(to)
            .ok_or(ChainError::UnknownAccount(*to))?;
        account.balance += amount;
        Ok(())
    }

    fn take_escrow(&mut self, bucket: &str, amount: Money) -> Result<(), ChainError> {
        let held = self.escrow(bucket);
        if held < amount {
            return Err(ChainError::InsufficientEscrow {
                bucket: bucket.to_string(),
                needed: amount,
                available: held,
            });
        }
        if held == amount {
            self.escrow.remove(bucket);
        } else {
            self.escrow.insert(bucket.to_string(), held - amount);
        }
        Ok(())
    }

    fn put_escrow(&mut self, bucket: &str, amount: Money) {
        if amount > 0 {
            *self.escrow.entry(bucket.to_string()).or_insert(0) += amount;
        }
    }

    pub fn transfer(&mut self, from: &Address, to: &Address, amount: Money) -> Result<(), ChainError> {
        self.account(to)?;
        self.debit(from, amount)?;
        self.credit(to, amount)
    }

    /// Moves `amount` from an account balance into escrow `bucket`.
    pub fn lock(&mut self, from: &Address, bucket: &str, amount: Money) -> Result<(), ChainError> {
        self.debit(from, amount)?;
        self.put_escrow(bucket, amount);
        Ok(())
    }

    /// Pays `amount` out of escrow `bucket` to an account.
    pub fn release(&mut self, bucket: &str, to: &Address, amount: Money) -> Result<(), ChainError> {
        self.account(to)?;
        self.take_escrow(bucket, amount)?;
        self.credit(to, amount)
    }

    pub fn move_escrow(&mut self, from_bucket: &str, to_bucket: &str, amount: Money) -> Result<(), ChainError> {
        self.take_escrow(from_bucket, amount)?;
        self.put_escrow(to_bucket, amount);
        Ok(())
    }

    pub fn escrow_to_fee_sink(&mut self, bucket: &str, amount: Money) -> Result<(), ChainError> {
        self.take_escrow(bucket, amount)?;
        self.fee_sink += amount;
        Ok(())
    }

    pub fn charge_fee(&mut self, from: &Address, amount: Money) -> Result<(), ChainError> {
        self.debit(from, amount)?;
        self.fee_sink += amount;
        Ok(())
    }

    /// Tags `kind` as `sender` at the current tick.
    pub fn sign(&self, sender: &Address, kind: EventKind) -> Result<Event, ChainError> {
        Ok(Event::sign(self.account(sender)?, kind, self.clock))
    }

    pub fn verify_event(&self, event: &Event) -> bool {
        self.accounts
            .get(&event.sender)
            .is_some_and(|a| event.verify_with(&a.secret))
    }

    /// Validates `pending` and mines a block on the current tip without
    /// committing it. Used by block proposers that want to inspect the hash
    /// before publishing.
    pub fn prepare_block(&self, miner: &Address, pending: Vec<Event>, difficulty: Target) -> Result<Block, ChainError> {
        if !self.account(miner)?.is_transaction_node {
            return Err(ChainError::NotTransactionNode(*miner));
        }
        if self.last_mined_tick >= self.clock {
            return Err(ChainError::TickAlreadyMined(self.clock));
        }
        if let Some(index) = pending.iter().position(|e| !self.verify_event(e)) {
            return Err(ChainError::BadAuthTag { index });
        }
        self.staged_transfers(&pending)?;
        Ok(Block::mine(
            self.chain.len() as u64,
            self.tip_hash(),
            pending,
            *miner,
            difficulty,
        ))
    }

    /// Applies transfer events to a copy of the touched balances.
    fn staged_transfers(&self, events: &[Event]) -> Result<BTreeMap<Address, Money>, ChainError> {
        let mut staged: BTreeMap<Address, Money> = BTreeMap::new();
        for event in events {
            if let EventKind::Transfer { to, amount } = &event.kind {
                let from_balance = match staged.get(&event.sender) {
                    Some(b) => *b,
                    None => self.balance(&event.sender)?,
                };
                if from_balance < *amount {
                    return Err(ChainError::InsufficientBalance {
                        account: event.sender,
                        needed: *amount,
                        available: from_balance,
                    });
                }
                staged.insert(event.sender, from_balance - amount);
                let to_balance = match staged.get(to) {
                    Some(b) => *b,
                    None => self.balance(to)?,
                };
                staged.insert(*to, to_balance + amount);
            }
        }
        Ok(staged)
    }

    /// Appends a block prepared by [`Ledger::prepare_block`] and applies its
    /// transfer events.
    pub fn commit_block(&mut self, block: Block) -> Result<(), ChainError> {
        if block.prev_hash != self.tip_hash() || block.height != self.chain.len() as u64 || !block.is_self_consistent() {
            return Err(ChainError::StaleBlock);
        }
        if !self.account(&block.miner)?.is_transaction_node {
            return Err(ChainError::NotTransactionNode(block.miner));
        }
        if self.last_mined_tick >= self.clock {
            return Err(ChainError::TickAlreadyMined(self.clock));
        }
        if let Some(index) = block.events.iter().position(|e| !self.verify_event(e)) {
            return Err(ChainError::BadAuthTag { index });
        }
        self.append_block(block)
    }

    /// Applies and appends a block whose checks have already passed.
    fn append_block(&mut self, block: Block) -> Result<(), ChainError> {
        let staged = self.staged_transfers(&block.events)?;
        for (address, balance) in staged {
            self.accounts
                .get_mut(&address)
                .expect("staged accounts exist")
                .balance = balance;
        }
        self.chain.push(block);
        self.last_mined_tick = self.clock;
        Ok(())
    }

    pub fn mine_block(&mut self, miner: &Address, pending: Vec<Event>, difficulty: Target) -> Result<&Block, ChainError> {
        let block = self.prepare_block(miner, pending, difficulty)?;
        self.append_block(block)?;
        Ok(self.chain.last().expect("just pushed"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::verify_chain;
    use crate::crypto::hash;

    fn funded() -> (Ledger, Address, Address, Address) {
        let mut ledger = Ledger::new();
        let a = ledger.create_account(b"p1", 10).unwrap();
        let b = ledger.create_account(b"p2", 0).unwrap();
        let miner = ledger.create_transaction_node(b"miner").unwrap();
        (ledger, a, b, miner)
    }

    #[test]
    fn account_derivation_is_hash_of_hash() {
        let mut ledger = Ledger::new();
        let a = ledger.create_account(b"p1", 0).unwrap();
        assert_eq!(a.0, hash(&hash(b"p1")));
        assert_eq!(ledger.balance(&a).unwrap(), 0);
        assert_eq!(
            ledger.create_account(b"p1", 5),
            Err(ChainError::DuplicateAccount(a))
        );
        let b = ledger.create_account(b"p2", 0).unwrap();
        assert_ne!(a, b);
        assert_eq!(ledger.create_account(b"", 1), Err(ChainError::EmptySeed));
    }

    #[test]
    fn transfers() {
        let (mut ledger, a, b, _) = funded();
        ledger.transfer(&a, &b, 0).unwrap();
        assert_eq!((ledger.balance(&a).unwrap(), ledger.balance(&b).unwrap()), (10, 0));
        ledger.transfer(&a, &b, 7).unwrap();
        assert_eq!((ledger.balance(&a).unwrap(), ledger.balance(&b).unwrap()), (3, 7));

        let before = format!("{ledger:?}");
        assert!(matches!(
            ledger.transfer(&b, &a, 11),
            Err(ChainError::InsufficientBalance { .. })
        ));
        assert_eq!(format!("{ledger:?}"), before);
        let ghost = Address([9u8; 32]);
        assert_eq!(ledger.transfer(&a, &ghost, 1), Err(ChainError::UnknownAccount(ghost)));
        assert_eq!(ledger.conservation_residual(), 0);
    }

    #[test]
    fn escrow_moves_conserve() {
        let (mut ledger, a, b, _) = funded();
        ledger.lock(&a, "pot", 6).unwrap();
        ledger.move_escrow("pot", "other", 2).unwrap();
        ledger.release("pot", &b, 4).unwrap();
        ledger.escrow_to_fee_sink("other", 2).unwrap();
        assert!(ledger.release("pot", &b, 1).is_err());
        assert_eq!(ledger.fee_sink(), 2);
        assert_eq!(ledger.total_money(), 10);
        assert_eq!(ledger.conservation_residual(), 0);
        assert!(ledger.escrow_buckets().is_empty());
    }

    #[test]
    fn mining() {
        let (mut ledger, a, b, miner) = funded();
        assert!(verify_chain(ledger.chain()));
        ledger.advance_clock(1);
        ledger.mine_block(&miner, vec![], Target::pow2(252).unwrap()).unwrap();
        assert_eq!(ledger.chain().len(), 2);
        assert!(matches!(
            ledger.mine_block(&miner, vec![], Target::MAX),
            Err(ChainError::TickAlreadyMined(1))
        ));

        ledger.advance_clock(1);
        let transfer = ledger
            .sign(&a, EventKind::Transfer { to: b, amount: 4 })
            .unwrap();
        ledger.mine_block(&miner, vec![transfer.clone()], Target::pow2(252).unwrap()).unwrap();
        assert_eq!(ledger.balance(&b).unwrap(), 4);
        assert_eq!(ledger.chain().last().unwrap().events, vec![transfer]);
        assert!(verify_chain(ledger.chain()));

        assert!(matches!(
            ledger.mine_block(&a, vec![], Target::MAX),
            Err(ChainError::NotTransactionNode(_))
        ));
    }

    #[test]
    fn tampered_event_rejects_whole_block() {
        let (mut ledger, a, b, miner) = funded();
        ledger.advance_clock(1);
        let good = ledger.sign(&a, EventKind::Transfer { to: b, amount: 1 }).unwrap();
        let mut bad = ledger.sign(&a, EventKind::Transfer { to: b, amount: 2 }).unwrap();
        bad.kind = EventKind::Transfer { to: b, amount: 3 };
        let height = ledger.chain().len();
        assert_eq!(
            ledger.mine_block(&miner, vec![good, bad], Target::MAX).map(|_| ()),
            Err(ChainError::BadAuthTag { index: 1 })
        );
        assert_eq!(ledger.chain().len(), height);
        assert_eq!(ledger.balance(&b).unwrap(), 0);
    }

    #[test]
    fn overdrawing_transfer_event_rejects_block() {
        let (mut ledger, a, b, miner) = funded();
        ledger.advance_clock(1);
        let e1 = ledger.sign(&a, EventKind::Transfer { to: b, amount: 6 }).unwrap();
        let e2 = ledger.sign(&a, EventKind::Transfer { to: b, amount: 6 }).unwrap();
        assert!(ledger.mine_block(&miner, vec![e1, e2], Target::MAX).is_err());
        assert_eq!(ledger.balance(&a).unwrap(), 10);
    }

    #[test]
    fn verify_chain_detects_mutation_and_reordering() {
        let (mut ledger, _, _, miner) = funded();
        for _ in 0..3 {
            ledger.advance_clock(1);
            ledger.mine_block(&miner, vec![], Target::pow2(250).unwrap()).unwrap();
        }
        let chain = ledger.chain().to_vec();
        assert!(verify_chain(&chain));

        let mut mutated = chain.clone();
        mutated[2].nonce += 1;
        assert!(!verify_chain(&mutated));

        let mut swapped = chain.clone();
        swapped.swap(1, 2);
        assert!(!verify_chain(&swapped));
        // Even with heights patched the links no longer line up.
        swapped[1].height = 1;
        swapped[2].height = 2;
        assert!(!verify_chain(&swapped));
    }
}
