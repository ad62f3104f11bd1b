//! The aid-distribution contract as a deterministic state machine.
//!
//! Every operation validates all of its guards before touching state, so an
//! error always leaves the state exactly as it was and produces no event.
//!
//! Storage is kept in normal form: only authorized recipients are stored,
//! zero balances are dropped. An absent key therefore reads as
//! "not a recipient", "balance 0" or "no registered account", and two states
//! that behave the same also encode to the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::keccak256;
use crate::types::{Address, Amount, Digest};

/// Longest accepted plaintext bank account, in UTF-8 bytes.
pub const MAX_ACCOUNT_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum ContractError {
    #[error("caller is not the organization")]
    Unauthorized,
    #[error("address is not an authorized recipient")]
    NotARecipient,
    #[error("insufficient funds: available {available}, requested {requested}")]
    InsufficientFunds { available: Amount, requested: Amount },
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("balance overflow")]
    Overflow,
    #[error("bank account must not be empty")]
    EmptyAccount,
    #[error("bank account is {0} bytes, limit is {MAX_ACCOUNT_LEN}")]
    AccountTooLong(usize),
    #[error("malformed call: {0}")]
    MalformedCall(String),
}

impl ContractError {
    /// Stable machine-readable name, used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::Unauthorized => "Unauthorized",
            ContractError::NotARecipient => "NotARecipient",
            ContractError::InsufficientFunds { .. } => "InsufficientFunds",
            ContractError::ZeroAmount => "ZeroAmount",
            ContractError::Overflow => "Overflow",
            ContractError::EmptyAccount => "EmptyAccount",
            ContractError::AccountTooLong(_) => "AccountTooLong",
            ContractError::MalformedCall(_) => "MalformedCall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CallKind {
    AddRecipient,
    RemoveRecipient,
    SendAllowance,
    AddFunds,
    GetBalance,
    RegisterBankAccount,
}

impl CallKind {
    pub const ALL: [CallKind; 6] = [
        CallKind::AddRecipient,
        CallKind::RemoveRecipient,
        CallKind::SendAllowance,
        CallKind::AddFunds,
        CallKind::GetBalance,
        CallKind::RegisterBankAccount,
    ];

    pub fn tag(self) -> u8 {
        match self {
            CallKind::AddRecipient => 1,
            CallKind::RemoveRecipient => 2,
            CallKind::SendAllowance => 3,
            CallKind::AddFunds => 4,
            CallKind::GetBalance => 5,
            CallKind::RegisterBankAccount => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        CallKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn is_mutating(self) -> bool {
        self != CallKind::GetBalance
    }
}

/// One invocation of a contract operation, in the flat wire form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractCall {
    pub kind: CallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<Amount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<String>,
}

impl ContractCall {
    fn bare(kind: CallKind) -> Self {
        ContractCall {
            kind,
            recipient: None,
            amount: None,
            account: None,
        }
    }

    pub fn add_recipient(recipient: Address) -> Self {
        ContractCall {
            recipient: Some(recipient),
            ..Self::bare(CallKind::AddRecipient)
        }
    }

    pub fn remove_recipient(recipient: Address) -> Self {
        ContractCall {
            recipient: Some(recipient),
            ..Self::bare(CallKind::RemoveRecipient)
        }
    }

    pub fn send_allowance(recipient: Address, amount: Amount) -> Self {
        ContractCall {
            recipient: Some(recipient),
            amount: Some(amount),
            ..Self::bare(CallKind::SendAllowance)
        }
    }

    pub fn add_funds(amount: Amount) -> Self {
        ContractCall {
            amount: Some(amount),
            ..Self::bare(CallKind::AddFunds)
        }
    }

    pub fn get_balance() -> Self {
        Self::bare(CallKind::GetBalance)
    }

    pub fn register_bank_account(recipient: Address, account: impl Into<String>) -> Self {
        ContractCall {
            recipient: Some(recipient),
            account: Some(account.into()),
            ..Self::bare(CallKind::RegisterBankAccount)
        }
    }

    /// Checks that exactly the fields required by `kind` are present.
    pub fn operation(&self) -> Result<Operation<'_>, ContractError> {
        let (need_recipient, need_amount, need_account) = match self.kind {
            CallKind::AddRecipient | CallKind::RemoveRecipient => (true, false, false),
            CallKind::SendAllowance => (true, true, false),
            CallKind::AddFunds => (false, true, false),
            CallKind::GetBalance => (false, false, false),
            CallKind::RegisterBankAccount => (true, false, true),
        };
        let check = |present: bool, needed: bool, field: &str| {
            if present == needed {
                Ok(())
            } else if needed {
                Err(ContractError::MalformedCall(format!(
                    "{:?} requires {field}",
                    self.kind
                )))
            } else {
                Err(ContractError::MalformedCall(format!(
                    "{:?} does not take {field}",
                    self.kind
                )))
            }
        };
        check(self.recipient.is_some(), need_recipient, "recipient")?;
        check(self.amount.is_some(), need_amount, "amount")?;
        check(self.account.is_some(), need_account, "account")?;

        // Presence was checked above, so the unwraps below cannot fail.
        Ok(match self.kind {
            CallKind::AddRecipient => Operation::AddRecipient(self.recipient.unwrap()),
            CallKind::RemoveRecipient => Operation::RemoveRecipient(self.recipient.unwrap()),
            CallKind::SendAllowance => {
                Operation::SendAllowance(self.recipient.unwrap(), self.amount.unwrap())
            }
            CallKind::AddFunds => Operation::AddFunds(self.amount.unwrap()),
            CallKind::GetBalance => Operation::GetBalance,
            CallKind::RegisterBankAccount => Operation::RegisterBankAccount(
                self.recipient.unwrap(),
                self.account.as_deref().unwrap(),
            ),
        })
    }
}

/// A well-formed call, borrowed from a [`ContractCall`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation<'a> {
    AddRecipient(Address),
    RemoveRecipient(Address),
    SendAllowance(Address, Amount),
    AddFunds(Amount),
    GetBalance,
    RegisterBankAccount(Address, &'a str),
}

impl Encode for ContractCall {
    fn encode_to(&self, w: &mut Writer) {
        w.u8(self.kind.tag());
        w.option(self.recipient.as_ref(), |w, a| {
            w.address(a);
        });
        w.option(self.amount.as_ref(), |w, a| {
            w.amount(*a);
        });
        w.option(self.account.as_ref(), |w, s| {
            w.str(s);
        });
    }
}

impl Decode for ContractCall {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        let kind = CallKind::from_tag(r.u8()?).ok_or(DecodeError::Invalid {
            what: "call kind tag",
            offset,
        })?;
        Ok(ContractCall {
            kind,
            recipient: r.option(|r| r.address())?,
            amount: r.option(|r| r.amount())?,
            account: r.option(|r| r.string())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    AllowanceSent,
    FundsAdded,
    BankAccountRegistered,
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AllowanceSent" => Ok(EventKind::AllowanceSent),
            "FundsAdded" => Ok(EventKind::FundsAdded),
            "BankAccountRegistered" => Ok(EventKind::BankAccountRegistered),
            other => Err(format!("unknown event kind {other:?}")),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub actor: Address,
    pub subject: Address,
    pub amount: Amount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_digest: Option<Digest>,
    pub tx_hash: Digest,
}

/// Who is calling, and which transaction the resulting events belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub caller: Address,
    pub tx_hash: Digest,
}

impl CallContext {
    pub fn new(caller: Address, tx_hash: Digest) -> Self {
        CallContext { caller, tx_hash }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractState {
    organization: Address,
    recipients: BTreeSet<Address>,
    balances: BTreeMap<Address, Amount>,
    bank_accounts: BTreeMap<Address, Digest>,
}

impl ContractState {
    /// Constructor: the deploying address becomes the organization.
    pub fn new(organization: Address) -> Self {
        ContractState {
            organization,
            recipients: BTreeSet::new(),
            balances: BTreeMap::new(),
            bank_accounts: BTreeMap::new(),
        }
    }

    pub fn organization(&self) -> Address {
        self.organization
    }

    pub fn is_recipient(&self, addr: &Address) -> bool {
        self.recipients.contains(addr)
    }

    pub fn recipients(&self) -> impl Iterator<Item = &Address> {
        self.recipients.iter()
    }

    pub fn balance_of(&self, addr: &Address) -> Amount {
        self.balances.get(addr).copied().unwrap_or_default()
    }

    pub fn balances(&self) -> impl Iterator<Item = (&Address, &Amount)> {
        self.balances.iter()
    }

    pub fn bank_account(&self, addr: &Address) -> Option<Digest> {
        self.bank_accounts.get(addr).copied()
    }

    /// Sum of all balances; `None` only if it exceeds u64, which the
    /// conservation invariant rules out.
    pub fn total_balance(&self) -> Option<Amount> {
        self.balances
            .values()
            .try_fold(Amount::ZERO, |acc, v| acc.checked_add(*v))
    }

    /// Canonical digest of the whole state; used as a block's state root.
    pub fn root(&self) -> Digest {
        self.digest()
    }

    fn only_organization(&self, caller: &Address) -> Result<(), ContractError> {
        if *caller == self.organization {
            Ok(())
        } else {
            Err(ContractError::Unauthorized)
        }
    }

    fn set_balance(&mut self, addr: Address, amount: Amount) {
        if amount.is_zero() {
            self.balances.remove(&addr);
        } else {
            self.balances.insert(addr, amount);
        }
    }

    pub fn add_recipient(&mut self, caller: &Address, recipient: Address) -> Result<(), ContractError> {
        self.only_organization(caller)?;
        self.recipients.insert(recipient);
        Ok(())
    }

    /// Revokes authorization only. Balance and registered account are kept.
    pub fn remove_recipient(&mut self, caller: &Address, recipient: Address) -> Result<(), ContractError> {
        self.only_organization(caller)?;
        self.recipients.remove(&recipient);
        Ok(())
    }

    /// Moves `amount` from the organization to an authorized recipient.
    pub fn send_allowance(
        &mut self,
        ctx: &CallContext,
        recipient: Address,
        amount: Amount,
    ) -> Result<EventRecord, ContractError> {
        self.only_organization(&ctx.caller)?;
        if !self.is_recipient(&recipient) {
            return Err(ContractError::NotARecipient);
        }
        let available = self.balance_of(&self.organization);
        let remaining = available
            .checked_sub(amount)
            .ok_or(ContractError::InsufficientFunds {
                available,
                requested: amount,
            })?;
        if amount.is_zero() {
            return Err(ContractError::ZeroAmount);
        }
        // The organization itself may be a recipient; the transfer is then a no-op on the total.
        if recipient == self.organization {
            return Ok(self.allowance_event(ctx, recipient, amount));
        }
        let credited = self
            .balance_of(&recipient)
            .checked_add(amount)
            .ok_or(ContractError::Overflow)?;
        self.set_balance(self.organization, remaining);
        self.set_balance(recipient, credited);
        Ok(self.allowance_event(ctx, recipient, amount))
    }

    fn allowance_event(&self, ctx: &CallContext, recipient: Address, amount: Amount) -> EventRecord {
        EventRecord {
            kind: EventKind::AllowanceSent,
            actor: ctx.caller,
            subject: recipient,
            amount,
            account_digest: None,
            tx_hash: ctx.tx_hash,
        }
    }

    pub fn add_funds(&mut self, ctx: &CallContext, amount: Amount) -> Result<EventRecord, ContractError> {
        self.only_organization(&ctx.caller)?;
        if amount.is_zero() {
            return Err(ContractError::ZeroAmount);
        }
        let updated = self
            .balance_of(&self.organization)
            .checked_add(amount)
            .ok_or(ContractError::Overflow)?;
        self.set_balance(self.organization, updated);
        Ok(EventRecord {
            kind: EventKind::FundsAdded,
            actor: ctx.caller,
            subject: ctx.caller,
            amount,
            account_digest: None,
            tx_hash: ctx.tx_hash,
        })
    }

    /// Balance of the caller; absent entries read as zero.
    pub fn get_balance(&self, caller: &Address) -> Amount {
        self.balance_of(caller)
    }

    /// Stores keccak256 of the raw UTF-8 bytes of `account`. The plaintext is dropped.
    pub fn register_bank_account(
        &mut self,
        ctx: &CallContext,
        recipient: Address,
        account: &str,
    ) -> Result<EventRecord, ContractError> {
        self.only_organization(&ctx.caller)?;
        if !self.is_recipient(&recipient) {
            return Err(ContractError::NotARecipient);
        }
        if account.is_empty() {
            return Err(ContractError::EmptyAccount);
        }
        if account.len() > MAX_ACCOUNT_LEN {
            return Err(ContractError::AccountTooLong(account.len()));
        }
        let digest = account_digest(account);
        self.bank_accounts.insert(recipient, digest);
        Ok(EventRecord {
            kind: EventKind::BankAccountRegistered,
            actor: ctx.caller,
            subject: recipient,
            amount: Amount::ZERO,
            account_digest: Some(digest),
            tx_hash: ctx.tx_hash,
        })
    }

    /// Dispatches a call to the matching operation.
    pub fn apply(&mut self, ctx: &CallContext, call: &ContractCall) -> Result<Vec<EventRecord>, ContractError> {
        match call.operation()? {
            Operation::AddRecipient(r) => self.add_recipient(&ctx.caller, r).map(|()| Vec::new()),
            Operation::RemoveRecipient(r) => {
                self.remove_recipient(&ctx.caller, r).map(|()| Vec::new())
            }
            Operation::SendAllowance(r, amount) => {
                self.send_allowance(ctx, r, amount).map(|e| vec![e])
            }
            Operation::AddFunds(amount) => self.add_funds(ctx, amount).map(|e| vec![e]),
            Operation::GetBalance => Ok(Vec::new()),
            Operation::RegisterBankAccount(r, account) => {
                self.register_bank_account(ctx, r, account).map(|e| vec![e])
            }
        }
    }

    /// Non-mutating form of [`apply`](Self::apply).
    pub fn applied(&self, ctx: &CallContext, call: &ContractCall) -> Result<(Self, Vec<EventRecord>), ContractError> {
        let mut next = self.clone();
        let events = next.apply(ctx, call)?;
        Ok((next, events))
    }
}

/// Digest stored for a bank account: keccak256 over the exact UTF-8 bytes,
/// with no length prefix or padding.
pub fn account_digest(account: &str) -> Digest {
    keccak256(account.as_bytes())
}

impl Encode for ContractState {
    fn encode_to(&self, w: &mut Writer) {
        w.address(&self.organization);
        w.count(self.recipients.len());
        for r in &self.recipients {
            w.address(r).u8(1);
        }
        w.count(self.balances.len());
        for (a, v) in &self.balances {
            w.address(a).amount(*v);
        }
        w.count(self.bank_accounts.len());
        for (a, d) in &self.bank_accounts {
            w.address(a).digest(d);
        }
    }
}
