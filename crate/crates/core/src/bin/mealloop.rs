use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mealloop::api::{serve, AppState};
use mealloop::config::Config;
use mealloop::dri::{sources, CanonicalUnitsTable, DriReference};
use mealloop::domain::{FieldSet, NutrientSchema};
use mealloop::eval::{self, EvalConfig};

#[derive(Parser)]
#[command(name = "mealloop", version, about = "Closed-loop meal nutrition service and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "mealloop.toml")]
        config: PathBuf,
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Build the merged reference table from the three source CSVs.
    Ingest {
        /// Source tables; the bundled ones are used when all three are omitted.
        #[arg(long, requires_all = ["vitamins", "macros"])]
        minerals: Option<PathBuf>,
        #[arg(long, requires_all = ["minerals", "macros"])]
        vitamins: Option<PathBuf>,
        #[arg(long, requires_all = ["minerals", "vitamins"])]
        macros: Option<PathBuf>,
        /// Canonical units table.
        #[arg(long)]
        units: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one evaluation family, or the whole suite.
    Eval {
        #[arg(value_enum)]
        metric: Metric,
        #[command(flatten)]
        opts: EvalOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Mae,
    Coverage,
    Po,
    Latency,
    Da,
    Suite,
}

#[derive(clap::Args)]
struct EvalOpts {
    /// TOML file with evaluation settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenarios: Option<usize>,
    /// Class proportions as insufficient,near,excessive.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    mix: Option<Vec<f64>>,
    #[arg(long)]
    random_seeds: Option<usize>,
    #[arg(long)]
    mask_p: Option<f64>,
    #[arg(long)]
    flip_p: Option<f64>,
    #[arg(long)]
    delay_ms: Option<u64>,
    #[arg(long)]
    vision_fixture: Option<PathBuf>,
    #[arg(long)]
    trace_fixture: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-metric CSV tables (suite only).
    #[arg(long)]
    tables: Option<PathBuf>,
}

impl EvalOpts {
    fn config(&self) -> anyhow::Result<EvalConfig> {
        let mut c = match &self.config {
            Some(p) => EvalConfig::from_toml(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
            None => EvalConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.scenarios {
            c.scenario_count = v;
        }
        if let Some(m) = &self.mix {
            c.class_mix = eval::ClassMix {
                insufficient: m[0],
                near_target: m[1],
                excessive: m[2],
            };
        }
        if let Some(v) = self.random_seeds {
            c.random_seeds = v;
        }
        if let Some(v) = self.mask_p {
            c.micronutrient_mask_p = v;
        }
        if let Some(v) = self.flip_p {
            c.sign_flip_p = v;
        }
        if let Some(v) = self.delay_ms {
            c.latency_delay_ms = v;
        }
        if self.vision_fixture.is_some() {
            c.vision_fixture = self.vision_fixture.clone();
        }
        if self.trace_fixture.is_some() {
            c.trace_fixture = self.trace_fixture.clone();
        }
        Ok(c)
    }
}

fn emit(out: Option<&PathBuf>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| p.display().to_string())?,
        None => writeln!(std::io::stdout(), "{text}")?,
    }
    Ok(())
}

fn run_eval(metric: Metric, opts: &EvalOpts) -> anyhow::Result<()> {
    let cfg = opts.config()?;
    let out = opts.out.as_ref();
    match metric {
        Metric::Mae => emit(out, &eval::suite::accuracy_section(&cfg, &cfg.vision()?)?),
        Metric::Coverage => {
            let acc = eval::suite::accuracy_section(&cfg, &cfg.vision()?)?;
            let rows: Vec<_> = [FieldSet::Full, FieldSet::Core, FieldSet::Micronutrients]
                .into_iter()
                .map(|s| {
                    serde_json::json!({
                        "set": s,
                        "zero_noise": acc.zero_noise.set(s).map(|r| r.coverage),
                        "masked": acc.masked.set(s).map(|r| r.coverage),
                    })
                })
                .collect();
            emit(out, &serde_json::json!({ "mask_p": acc.mask_p, "coverage": rows }))
        }
        Metric::Po => {
            let results = eval::suite::po_run(&cfg.vision()?, &cfg.traces()?)?;
            emit(out, &serde_json::json!({ "stats": eval::po::po_stats(&results), "traces": results }))
        }
        Metric::Latency => emit(
            out,
            &eval::latency::run_latency(&cfg.traces()?, &cfg.vision()?, cfg.latency_delay_ms, cfg.latency_requests)?,
        ),
        Metric::Da => emit(out, &eval::suite::da_run(&cfg)?),
        Metric::Suite => {
            let report = eval::run_eval_suite(&cfg)?;
            if let Some(dir) = &opts.tables {
                for p in eval::suite::write_tables(&report, dir)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            emit(out, &report)
        }
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Serve { config, bind } => {
            let cfg = Config::load(&config)?;
            // Built before the runtime: remote backends use blocking clients.
            let orch = Arc::new(cfg.build_orchestrator()?);
            let state = Arc::new(AppState::new(orch, cfg.api_token(), cfg.server.idempotency_cache));
            let addr = bind.unwrap_or(cfg.server.bind);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                serve(listener, state).await
            })?;
        }
        Cmd::Ingest {
            minerals,
            vitamins,
            macros,
            units,
            out,
        } => {
            let units = match units {
                Some(p) => CanonicalUnitsTable::from_file(&p, &NutrientSchema::standard())?,
                None => CanonicalUnitsTable::standard()?,
            };
            let reference = match (minerals, vitamins, macros) {
                (Some(m), Some(v), Some(a)) => DriReference::from_paths(&m, &v, &a, &units)?,
                (None, None, None) => DriReference::from_sources(
                    sources::MINERALS_CSV.as_bytes(),
                    sources::VITAMINS_CSV.as_bytes(),
                    sources::MACRONUTRIENTS_CSV.as_bytes(),
                    &units,
                )?,
                _ => bail!("give all three source tables or none"),
            };
            reference.save(&out)?;
            eprintln!("wrote {} rows to {}", reference.len(), out.display());
        }
        Cmd::Eval { metric, opts } => run_eval(metric, &opts)?,
    }
    Ok(())
}
