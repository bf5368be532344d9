use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dealer::allocation::{base_compensation, eligible_owners, make_solver, owner_cost, CompItem};
use dealer::broker::{run_pipeline, PipelineConfig};
use dealer::error::{DealerError, Result};
use dealer::io;
use dealer::losses::LossKind;
use dealer::money::Money;
use dealer::pricing::{check_arbitrage_free, make_pricer, per_tier_revenue};
use dealer::training::{LossSpec, Sample};
use dealer::types::{DataOwner, ModelTier};
use dealer::valuation::{exact_shapley, monte_carlo_shapley, AccuracyOracle, ShapleyReport};

#[derive(Parser)]
#[command(name = "dealer", version, about = "Data marketplace broker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-owner Shapley values for a dataset.
    Value {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        /// Override the configured permutation count (0 = exact).
        #[arg(long)]
        permutations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select a training subset for one tier under its budget.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        /// 1-based tier index.
        #[arg(long, default_value_t = 1)]
        tier: usize,
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        permutations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price all tiers against a demand survey.
    Price {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        survey: PathBuf,
        /// Pricing method from the registry.
        #[arg(long)]
        method: Option<String>,
        /// Output directory for pricing.json and prices.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full brokering pipeline and emit a market report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        permutations: Option<u32>,
    },
    /// Generate synthetic owners, eval set, survey, and a starter config.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        owners: usize,
        #[arg(long, default_value_t = 5)]
        features: usize,
        #[arg(long, default_value_t = 3)]
        tiers: usize,
        #[arg(long, default_value = "independent-uniform")]
        survey_kind: String,
        #[arg(long, default_value_t = 100)]
        survey_size: usize,
    },
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    let raw = fs::read_to_string(path)?;
    let config: PipelineConfig = serde_json::from_str(&raw).map_err(|e| {
        DealerError::ParseError {
            row: e.line(),
            column: "config".into(),
            reason: e.to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn samples_of(owners: &[DataOwner]) -> BTreeMap<u32, Sample> {
    owners
        .iter()
        .map(|o| (o.id, (o.features.clone(), o.label)))
        .collect()
}

fn value_owners(
    config: &PipelineConfig,
    owners: &[DataOwner],
    eval: &[Sample],
    permutations: u32,
    seed: u64,
) -> Result<ShapleyReport> {
    let oracle = AccuracyOracle::new(samples_of(owners), eval.to_vec(), config.loss, 1e-9, seed)?;
    let ids: Vec<u32> = owners.iter().map(|o| o.id).collect();
    if permutations == 0 {
        exact_shapley(&ids, &oracle)
    } else {
        monte_carlo_shapley(&ids, &oracle, permutations, seed)
    }
}

fn write_or_print(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, contents)?,
        None => println!("{contents}"),
    }
    Ok(())
}

fn cmd_value(
    config: &Path,
    data: &Path,
    eval: &Path,
    permutations: Option<u32>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(config)?;
    let owners = io::ingest_dataset(data)?;
    let eval = io::ingest_eval(eval)?;
    let report = value_owners(
        &config,
        &owners,
        &eval,
        permutations.unwrap_or(config.shapley_permutations),
        seed.unwrap_or(config.shapley_seed),
    )?;
    let json = serde_json::to_string_pretty(&report).expect("report serialization");
    write_or_print(out, &json)
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    config: &Path,
    data: &Path,
    eval: &Path,
    tier_index: usize,
    solver: Option<&str>,
    permutations: Option<u32>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(config)?;
    let tier: &ModelTier = config
        .tiers
        .iter()
        .find(|t| t.index == tier_index)
        .ok_or_else(|| DealerError::InvalidTiers(format!("no tier with index {tier_index}")))?;
    let owners = io::ingest_dataset(data)?;
    let eval = io::ingest_eval(eval)?;
    let eligible_ids = eligible_owners(&owners, tier);
    let eligible: Vec<DataOwner> = owners
        .iter()
        .filter(|o| eligible_ids.contains(&o.id))
        .cloned()
        .collect();
    if eligible.is_empty() {
        return Err(DealerError::AllZeroShapley);
    }
    let solver = make_solver(solver.unwrap_or(&config.solver), config.guess_alpha)?;
    let report = value_owners(
        &config,
        &eligible,
        &eval,
        permutations.unwrap_or(config.shapley_permutations),
        seed.unwrap_or(config.shapley_seed),
    )?;
    let bc = base_compensation(&report.values, tier.budget)?;
    let items: Vec<CompItem> = report
        .owner_ids
        .iter()
        .zip(&report.values)
        .zip(&bc)
        .map(|((id, &sv), &base)| {
            let owner = eligible.iter().find(|o| o.id == *id).unwrap();
            let extra = owner_cost(owner, tier, base) - base;
            CompItem::new(*id, sv, base, extra)
        })
        .collect();
    let selection = solver.solve(&items, tier.budget)?;
    let output = serde_json::json!({
        "tier": tier_index,
        "budget_minor": tier.budget.minor(),
        "shapley": report,
        "items": items,
        "selection": selection,
    });
    write_or_print(out, &serde_json::to_string_pretty(&output).unwrap())
}

fn cmd_price(config: &Path, survey: &Path, method: Option<&str>, out: &Path) -> Result<()> {
    let config = load_config(config)?;
    let survey = io::ingest_survey(survey)?;
    for point in &survey {
        point.validate(config.tiers.len())?;
    }
    let pricer = make_pricer(method.unwrap_or(&config.pricing))?;
    let schedule = pricer.price(&config.tiers, &survey)?;
    let arbitrage = check_arbitrage_free(&config.tiers, &schedule.prices);
    let tier_revenue = per_tier_revenue(&schedule.prices, &survey);

    fs::create_dir_all(out)?;
    let output = serde_json::json!({
        "schedule": schedule,
        "arbitrage": arbitrage,
        "tier_revenue": tier_revenue,
    });
    fs::write(
        out.join("pricing.json"),
        serde_json::to_string_pretty(&output).unwrap() + "\n",
    )?;

    let mut w = csv::Writer::from_path(out.join("prices.csv"))?;
    w.write_record([
        "tier",
        "epsilon",
        "price_num",
        "price_den",
        "price",
        "revenue_num",
        "revenue_den",
        "revenue",
        "zero_demand",
    ])?;
    for (i, tier) in config.tiers.iter().enumerate() {
        let p = schedule.prices[i];
        let r = tier_revenue[i];
        w.write_record([
            tier.index.to_string(),
            format!("{}", tier.epsilon),
            p.numerator().to_string(),
            p.denominator().to_string(),
            format!("{:.2}", p.to_f64() / 100.0),
            r.numerator().to_string(),
            r.denominator().to_string(),
            format!("{:.2}", r.to_f64() / 100.0),
            schedule.zero_demand[i].to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "method={} revenue={:.2} arbitrage_free={}",
        schedule.method,
        schedule.revenue.to_f64() / 100.0,
        arbitrage.is_arbitrage_free()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    data: &Path,
    eval: &Path,
    survey: &Path,
    out: &Path,
    seed: Option<u64>,
    solver: Option<&str>,
    permutations: Option<u32>,
) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(seed) = seed {
        config.shapley_seed = seed;
    }
    if let Some(solver) = solver {
        config.solver = solver.to_string();
    }
    if let Some(p) = permutations {
        config.shapley_permutations = p;
    }
    let owners = io::ingest_dataset(data)?;
    let eval = io::ingest_eval(eval)?;
    let survey = io::ingest_survey(survey)?;
    let report = run_pipeline(&config, &owners, &eval, &survey)?;
    io::emit_report(&report, out)?;
    println!(
        "tiers={} revenue={:.2} distributed={} deficit={}",
        report.tiers.len(),
        report.revenue.to_f64() / 100.0,
        report.distributed_total.display(),
        report.deficit
    );
    Ok(())
}

fn starter_config(tier_count: usize, seed: u64) -> PipelineConfig {
    PipelineConfig {
        tiers: (1..=tier_count)
            .map(|m| ModelTier {
                index: m,
                epsilon: m as f64,
                delta: 1e-6,
                budget: Money::from_major(100),
            })
            .collect(),
        loss: LossSpec {
            kind: LossKind::Logistic,
            lambda: 0.1,
            lipschitz: 1.0,
            smoothness: 2.0,
            radius: 5.0,
        },
        shapley_permutations: 200,
        shapley_seed: seed,
        solver: "dp".into(),
        guess_alpha: 0.5,
        survey_size_hint: 100,
        alpha_opt: 1e-6,
        pricing: "dealer-plus".into(),
        reuse_tier1_valuation: false,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    out: &Path,
    seed: u64,
    owners: usize,
    features: usize,
    tiers: usize,
    survey_kind: &str,
    survey_size: usize,
) -> Result<()> {
    let kind = io::SurveyKind::parse(survey_kind).ok_or_else(|| DealerError::UnknownStrategy {
        kind: "survey-kind",
        name: survey_kind.to_string(),
        known: "independent-uniform, gaussian-counts".into(),
    })?;
    fs::create_dir_all(out)?;
    let dataset = io::generate_dataset(owners, features, 1.0, seed);
    let eval = io::generate_eval((owners / 2).max(10), features, 1.0, seed.wrapping_add(1));
    let survey = io::generate_survey(kind, tiers, survey_size, seed.wrapping_add(2));
    io::write_dataset(&out.join("owners.csv"), &dataset)?;
    io::write_eval(&out.join("eval.csv"), &eval)?;
    io::write_survey(&out.join("survey.csv"), &survey)?;
    let config = starter_config(tiers, seed);
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&config).unwrap() + "\n",
    )?;
    println!(
        "wrote owners.csv ({owners}), eval.csv, survey.csv ({survey_size}), config.json to {}",
        out.display()
    );
    Ok(())
}

/// 2 marks malformed input, 3 an infeasible configuration or size guard.
fn exit_code(err: &DealerError) -> u8 {
    match err {
        DealerError::InvalidOwner { .. }
        | DealerError::InvalidLabel { .. }
        | DealerError::InvalidTiers(_)
        | DealerError::InvalidSurveyPoint(_)
        | DealerError::InvalidPrivacyParams(_)
        | DealerError::DimensionMismatch { .. }
        | DealerError::EmptyEvalSet
        | DealerError::EmptySurvey
        | DealerError::UnknownStrategy { .. }
        | DealerError::ParseError { .. }
        | DealerError::Io(_)
        | DealerError::Csv(_) => 2,
        DealerError::TooManyOwners(..)
        | DealerError::NonFinite
        | DealerError::AllZeroShapley
        | DealerError::TooManyItems(..)
        | DealerError::BudgetTooLargeForTable(..)
        | DealerError::EnumerationTooLarge(..)
        | DealerError::EmptySolutionSpace
        | DealerError::SearchSpaceTooLarge(..)
        | DealerError::ZeroTotalPrice => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Value {
            config,
            data,
            eval,
            permutations,
            seed,
            out,
        } => cmd_value(config, data, eval, *permutations, *seed, out.as_deref()),
        Command::Select {
            config,
            data,
            eval,
            tier,
            solver,
            permutations,
            seed,
            out,
        } => cmd_select(
            config,
            data,
            eval,
            *tier,
            solver.as_deref(),
            *permutations,
            *seed,
            out.as_deref(),
        ),
        Command::Price {
            config,
            survey,
            method,
            out,
        } => cmd_price(config, survey, method.as_deref(), out),
        Command::Run {
            config,
            data,
            eval,
            survey,
            out,
            seed,
            solver,
            permutations,
        } => cmd_run(
            config,
            data,
            eval,
            survey,
            out,
            *seed,
            solver.as_deref(),
            *permutations,
        ),
        Command::Gen {
            out,
            seed,
            owners,
            features,
            tiers,
            survey_kind,
            survey_size,
        } => cmd_gen(
            out,
            *seed,
            *owners,
            *features,
            *tiers,
            survey_kind,
            *survey_size,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
