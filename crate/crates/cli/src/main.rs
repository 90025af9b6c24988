use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use flagfour::game::{Action, BoardState};
use flagfour::harness::{
    aggregate, metrics_csv_row, run_experiment, test_run, AggregateReport, ExperimentConfig,
    MetricSummary, PolicyKind, Role, RunMetrics, METRICS_CSV_HEADER,
};
use flagfour::policy::argmax_action;
use flagfour::qlearn::QNetwork;

#[derive(Parser)]
#[command(
    name = "flagfour",
    version,
    about = "Train, evaluate and play Connect Four agents with flag-guided exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its checkpoint and metrics
    Train(TrainArgs),
    /// Evaluate a checkpoint against the search opponent
    Test(TestArgs),
    /// Run the full multi-seed table for one role
    Reproduce(ReproduceArgs),
    /// Play against a checkpoint in the terminal
    Play(PlayArgs),
}

/// Settings shared by the run commands. The config file is applied first,
/// explicit flags win.
#[derive(Args)]
struct Overrides {
    /// Config file with `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_episodes: Option<u32>,
    #[arg(long)]
    test_episodes: Option<u32>,
    #[arg(long)]
    batch_games: Option<u32>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Opponent search depth
    #[arg(long)]
    depth: Option<u32>,
    /// Opponent random-branch probability
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Side the agent plays, player1 or player2
    #[arg(long, default_value = "player1")]
    role: Role,
    /// epsilon_greedy, classical_tags or quantum_tags
    #[arg(long, default_value = "classical_tags")]
    policy: PolicyKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "player1")]
    role: Role,
    #[arg(long, default_value_t = 1000)]
    episodes: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    role: Role,
    /// Number of runs per policy
    #[arg(long, default_value_t = 5)]
    seeds: u32,
    /// Master seed of the first run; later runs count up from it
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    /// Comma-separated subset of the three policies
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "epsilon_greedy,classical_tags,quantum_tags"
    )]
    policies: Vec<PolicyKind>,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Side the agent plays; you take the other one
    #[arg(long, default_value = "player1")]
    role: Role,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Test(a) => cmd_test(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Play(a) => cmd_play(a),
    }
}

fn build_config(role: Role, policy: PolicyKind, common: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::for_role_policy(role, policy);
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_config_text(&text)?;
    }
    if let Some(n) = common.train_episodes {
        cfg.train_episodes = n;
    }
    if let Some(n) = common.test_episodes {
        cfg.test_episodes = n;
    }
    if let Some(n) = common.batch_games {
        cfg.training.batch_games = n;
    }
    if let Some(s) = common.step_size {
        cfg.training.step_size = s;
    }
    if let Some(d) = common.depth {
        cfg.negamax.depth = d;
    }
    if let Some(o) = common.omega {
        cfg.negamax.omega = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn append_metrics(path: &Path, rows: &[RunMetrics]) -> Result<()> {
    let need_header = !path.exists() || fs::metadata(path)?.len() == 0;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if need_header {
        writeln!(f, "{}", METRICS_CSV_HEADER)?;
    }
    for m in rows {
        writeln!(f, "{}", metrics_csv_row(m))?;
    }
    Ok(())
}

fn write_loss_trace(path: &Path, trace: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from("cycle,epoch,mse\n");
    for (cycle, epochs) in trace.iter().enumerate() {
        for (epoch, mse) in epochs.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", cycle, epoch, mse));
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = build_config(a.role, a.policy, &a.common)?;
    let (metrics, trained) = run_experiment(&cfg, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let stem = format!("{}_{}_seed{}", cfg.policy.label(), cfg.role.label(), a.seed);
    let ckpt = a.out_dir.join(format!("{stem}.ckpt"));
    fs::write(&ckpt, trained.net.to_bytes())
        .with_context(|| format!("writing {}", ckpt.display()))?;
    if cfg.policy.uses_flags() {
        fs::write(
            a.out_dir.join(format!("{stem}_flags.txt")),
            trained.flags.dump(),
        )?;
    }
    write_loss_trace(
        &a.out_dir.join(format!("{stem}_loss.csv")),
        &trained.loss_trace,
    )?;
    append_metrics(
        &a.out_dir.join("metrics.csv"),
        std::slice::from_ref(&metrics),
    )?;
    println!(
        "{} as {} (seed {}): win_rate {:.1}%, {} states explored, checkpoint {}",
        cfg.policy,
        cfg.role,
        a.seed,
        metrics.win_rate,
        metrics.states_explored,
        ckpt.display()
    );
    Ok(())
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let bytes =
        fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let net = QNetwork::from_bytes(&bytes)?;
    let mut cfg = ExperimentConfig::for_role_policy(a.role, PolicyKind::EpsilonGreedy);
    cfg.test_episodes = a.episodes;
    if let Some(d) = a.depth {
        cfg.negamax.depth = d;
    }
    if let Some(o) = a.omega {
        cfg.negamax.omega = o;
    }
    cfg.negamax.validate()?;
    let counts = test_run(&net, &cfg, a.seed)?;
    let rate = if a.episodes == 0 {
        0.0
    } else {
        100.0 * f64::from(counts.wins) / f64::from(a.episodes)
    };
    println!(
        "wins={} draws={} losses={} win_rate={:.1}%",
        counts.wins, counts.draws, counts.losses, rate
    );
    Ok(())
}

fn format_summary(m: &MetricSummary, decimals: usize) -> String {
    match m.std {
        Some(s) => format!("{:.d$} ± {:.d$}", m.mean, s, d = decimals),
        None => format!("{:.d$}", m.mean, d = decimals),
    }
}

fn print_report(r: &AggregateReport) {
    let iterations = r
        .iterations_mean
        .as_ref()
        .map(|m| format_summary(m, 3))
        .unwrap_or_else(|| "-".into());
    println!(
        "{} ({} runs): win_rate {}%, states {}, iterations {}",
        r.policy,
        r.runs,
        format_summary(&r.win_rate, 1),
        format_summary(&r.states_explored, 1),
        iterations
    );
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<()> {
    let mut all_rows = Vec::new();
    let mut reports = Vec::new();
    for &policy in &a.policies {
        let cfg = build_config(a.role, policy, &a.common)?;
        let mut rows = Vec::new();
        for i in 0..a.seeds {
            let seed = a.base_seed + u64::from(i);
            let (metrics, _) = run_experiment(&cfg, seed)?;
            println!("{}", metrics_csv_row(&metrics));
            rows.push(metrics);
        }
        reports.push(aggregate(&rows)?);
        all_rows.extend(rows);
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    append_metrics(&a.out_dir.join("metrics.csv"), &all_rows)?;
    let json = serde_json::to_string_pretty(&reports)?;
    fs::write(a.out_dir.join("aggregate.json"), json)?;
    for r in &reports {
        print_report(r);
    }
    Ok(())
}

fn render(board: &BoardState) {
    print!("{}", board.to_text());
    println!("0123456");
}

fn cmd_play(a: PlayArgs) -> Result<()> {
    let bytes =
        fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let net = QNetwork::from_bytes(&bytes)?;
    let agent = a.role.disc();
    let (agent_sym, human_sym) = if agent == 1 { ('X', 'O') } else { ('O', 'X') };
    println!(
        "agent plays {}, you play {}; enter a column 0-6, q quits",
        agent_sym, human_sym
    );
    let mut board = BoardState::empty();
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut to_move: i8 = 1;
    while !board.outcome().is_terminal() {
        if to_move == agent {
            let q = net.q_values(&board, agent)?;
            let action = argmax_action(&q);
            println!("agent drops column {}", action);
            board = board.apply(action, agent)?;
        } else {
            render(&board);
            print!("your move: ");
            io::stdout().flush()?;
            let line = match lines.next() {
                Some(l) => l?,
                None => {
                    println!();
                    println!("input closed, goodbye");
                    return Ok(());
                }
            };
            let line = line.trim();
            if line.eq_ignore_ascii_case("q") {
                println!("goodbye");
                return Ok(());
            }
            let col = match line.parse::<usize>().ok().and_then(Action::new) {
                Some(c) => c,
                None => {
                    println!("enter a column number 0-6");
                    continue;
                }
            };
            board = match board.apply(col, -agent) {
                Ok(b) => b,
                Err(_) => {
                    println!("column {} is full", col);
                    continue;
                }
            };
        }
        to_move = -to_move;
    }
    render(&board);
    match board.outcome().winner() {
        Some(w) if w == agent => println!("the agent wins"),
        Some(_) => println!("you win"),
        None => println!("draw"),
    }
    Ok(())
}
