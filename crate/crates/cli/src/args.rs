use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Administrative client for the aid-disbursement ledger.
///
/// Exit codes: 0 success, 1 usage error, 2 node or API error,
/// 3 verification failure.
#[derive(Debug, Parser)]
#[command(name = "aidchain", version)]
pub struct Cli {
    /// Node base URL [default: profile value, then http://127.0.0.1:8650]
    #[arg(long, global = true, env = "AIDCHAIN_NODE_URL")]
    pub node: Option<String>,
    /// Signing key file (mode 0600) for commands that need a signature
    #[arg(long, global = true)]
    pub key: Option<PathBuf>,
    /// Profile file with defaults
    #[arg(long, global = true, env = crate::profile::PROFILE_ENV)]
    pub profile: Option<PathBuf>,
    /// Print a single JSON document instead of a table
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct WaitArgs {
    /// Return as soon as the node accepts the transaction
    #[arg(long)]
    pub no_wait: bool,
    /// Seconds to wait for the commit
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a signing key file
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing file
        #[arg(long)]
        force: bool,
    },
    /// Register an actor identity (organization only)
    ActorRegister {
        /// Hex public key of the new actor
        #[arg(long, conflicts_with = "key_file", required_unless_present = "key_file")]
        public_key: Option<String>,
        /// Take the public key from this key file
        #[arg(long)]
        key_file: Option<PathBuf>,
        /// organization, recipient or observer
        #[arg(long)]
        role: String,
        #[arg(long)]
        name: String,
    },
    /// Authorize or revoke recipients
    Recipient {
        #[command(subcommand)]
        action: RecipientAction,
    },
    /// Organization funds
    Funds {
        #[command(subcommand)]
        action: FundsAction,
    },
    /// Allowances to recipients
    Allowance {
        #[command(subcommand)]
        action: AllowanceAction,
    },
    /// Bank-account commitments
    BankAccount {
        #[command(subcommand)]
        action: BankAccountAction,
    },
    /// Committed balance of an address (default: your own)
    Balance { address: Option<String> },
    /// Committed events, oldest first
    Events {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        address: Option<String>,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
    /// A committed block
    Block { height: u64 },
    /// Status of a transaction
    Tx { hash: String },
    /// Export a settlement record for a recipient (organization only)
    SettleExport {
        #[arg(long)]
        recipient: String,
    },
    /// Node liveness, height and pending count
    Health,
    /// Verify a chain file offline
    ChainVerify {
        #[arg(long)]
        store: PathBuf,
    },
    /// Run a consensus scenario in the simulator
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the full trace here
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecipientAction {
    Add {
        #[arg(long)]
        address: String,
        #[command(flatten)]
        wait: WaitArgs,
    },
    Remove {
        #[arg(long)]
        address: String,
        #[command(flatten)]
        wait: WaitArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum FundsAction {
    Add {
        #[arg(long)]
        amount: String,
        #[command(flatten)]
        wait: WaitArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum AllowanceAction {
    Send {
        #[arg(long)]
        to: String,
        #[arg(long)]
        amount: String,
        #[command(flatten)]
        wait: WaitArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum BankAccountAction {
    Register {
        #[arg(long)]
        recipient: String,
        /// Plaintext account; prefer --account-stdin to keep it out of shell history
        #[arg(long, conflicts_with = "account_stdin", required_unless_present = "account_stdin")]
        account: Option<String>,
        /// Read the account from standard input
        #[arg(long)]
        account_stdin: bool,
        #[command(flatten)]
        wait: WaitArgs,
    },
}
