//! Command-line front end: capacity tables, printed-table verification,
//! channel simulation, FEC sweeps, key-generation demos, and pdf tabulation.
//!
//! Exit codes: 0 success (and every verification PASS), 1 verification
//! FAIL, 2 usage or configuration error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vbsc_core::capacity::{
    capacity_csi_both, capacity_csi_decoder, capacity_csi_encoder_causal, capacity_no_csi,
    capacity_noncausal_bounds, CapacityResult, CsiMode,
};
use vbsc_core::channel::{estimate_mutual_information, transmit};
use vbsc_core::fuzzy_extractor::{enroll, make_device, reproduce};
use vbsc_core::polar::{plan_binned_codes, run_binned_transmission};
use vbsc_core::state_models::{Density, StateDistribution};

/// Embedded reference values for the verification command: the four
/// capacities of the hybrid cell model with lambda1 = 0.1213,
/// lambda2 = 0.021, and the two capacity deltas.
const REFERENCE_CAPACITIES: [(&str, f64); 4] = [
    ("C_VBSC", 0.6961),
    ("C_VBSC-E", 0.7649),
    ("C_VBSC-D", 0.8751),
    ("C_VBSC-ED", 0.8751),
];
const REFERENCE_DELTAS: [(&str, f64); 2] = [("ED-none", 0.179), ("E-none", 0.0688)];
const CELL_TOL: f64 = 0.002;
const DELTA_TOL: f64 = 0.005;

#[derive(Parser)]
#[command(
    name = "vbsc",
    about = "Varying-BSC capacities, simulation, polar FEC, and PUF key generation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Distribution config: a path to a JSON file or inline JSON
    /// (e.g. '{"kind":"maes_hybrid","lambda1":0.1213,"lambda2":0.021}').
    #[arg(long)]
    dist: String,
    /// Run seed; every command is deterministic given the seed (default 42)
    /// and echoes it in its output header.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Channel capacity for one CSI regime, or all of them.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// One of: none, enc-causal, enc-noncausal, dec, both, all.
        #[arg(long, default_value = "all")]
        regime: String,
        /// Certified bracket width for the decoder-side capacities.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// csv or json.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Verify the four capacities and two deltas of the reference cell
    /// model against the embedded reference values. Exits 1 on any FAIL.
    Table1 {
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Override the cell-model ratio parameter (negative control).
        #[arg(long, default_value_t = 0.1213)]
        lambda1: f64,
        /// Override the cell-model offset parameter.
        #[arg(long, default_value_t = 0.021)]
        lambda2: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Transmit over the channel: emits a trace CSV and a Monte-Carlo
    /// mutual-information summary with an agreement verdict.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// CSI mode: none, enc-causal, dec, both.
        #[arg(long, default_value = "none")]
        mode: String,
        /// Channel uses (also the MI sample count; MI needs at least 10^4).
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
    /// Sweep the binned multi-code scheme over rate margins; emits CSV
    /// rows margin,n_bins,realized_rate,bler,n_blocks,seed.
    FecSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rate margins, e.g. 0.05,0.15,0.25.
        #[arg(long, default_value = "0.05,0.15,0.25")]
        margins: String,
        #[arg(long, default_value_t = 16)]
        n_bins: usize,
        #[arg(long, default_value_t = 30)]
        blocks: usize,
        #[arg(long, default_value_t = 16384)]
        block_budget: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Enroll/reproduce keys with and without reliability tags, paired;
    /// emits a summary JSON.
    PufDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 512)]
        n_cells: usize,
        #[arg(long, default_value_t = 128)]
        key_bits: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Tabulate the state density as CSV (p, f_P(p)); endpoints are
    /// sampled in transformed coordinates to expose boundary spikes.
    PlotPdf {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_dist(spec: &str) -> Result<StateDistribution, String> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec).map_err(|e| format!("reading {spec}: {e}"))?
    };
    StateDistribution::from_json(&text).map_err(|e| format!("distribution config: {e}"))
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            fs::write(path, content).map_err(|e| format!("writing {}: {e}", path.display()))
        }
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Capacity {
            common,
            regime,
            eps,
            format,
        } => cmd_capacity(&common, &regime, eps, &format),
        Command::Table1 {
            eps,
            lambda1,
            lambda2,
            seed,
        } => cmd_table1(eps, lambda1, lambda2, seed),
        Command::Simulate { common, mode, n } => cmd_simulate(&common, &mode, n),
        Command::FecSweep {
            common,
            margins,
            n_bins,
            blocks,
            block_budget,
            eps,
        } => cmd_fec_sweep(&common, &margins, n_bins, blocks, block_budget, eps),
        Command::PufDemo {
            common,
            n_cells,
            key_bits,
            trials,
        } => cmd_puf_demo(&common, n_cells, key_bits, trials),
        Command::PlotPdf { common, points } => cmd_plot_pdf(&common, points),
    }
}

fn compute_regime(
    dist: &StateDistribution,
    regime: CsiMode,
    eps: f64,
) -> Result<CapacityResult, String> {
    let r = match regime {
        CsiMode::None => capacity_no_csi(dist),
        CsiMode::EncoderCausal => capacity_csi_encoder_causal(dist),
        CsiMode::Decoder => capacity_csi_decoder(dist, eps).map_err(|e| e.to_string())?,
        CsiMode::Both => capacity_csi_both(dist, eps).map_err(|e| e.to_string())?,
        CsiMode::EncoderNonCausal => {
            return Err("enc-noncausal has bounds only; handled by the caller".into())
        }
    };
    Ok(r)
}

fn cmd_capacity(common: &Common, regime: &str, eps: f64, format: &str) -> Result<ExitCode, String> {
    let dist = load_dist(&common.dist)?;
    let mut out = String::new();
    out.push_str(&format!("# seed={} eps={eps}\n", common.seed));
    match regime {
        "all" => {
            let values = [
                compute_regime(&dist, CsiMode::None, eps)?,
                compute_regime(&dist, CsiMode::EncoderCausal, eps)?,
                compute_regime(&dist, CsiMode::Decoder, eps)?,
                compute_regime(&dist, CsiMode::Both, eps)?,
            ];
            match format {
                "csv" => {
                    out.push_str("C_VBSC,C_VBSC-E,C_VBSC-D,C_VBSC-ED\n");
                    out.push_str(&format!(
                        "{:.4},{:.4},{:.4},{:.4}\n",
                        values[0].value, values[1].value, values[2].value, values[3].value
                    ));
                }
                "json" => {
                    let obj = serde_json::json!({
                        "none": values[0],
                        "enc-causal": values[1],
                        "dec": values[2],
                        "both": values[3],
                    });
                    out.push_str(&obj.to_string());
                    out.push('\n');
                }
                other => return Err(format!("unknown format \"{other}\"")),
            }
        }
        "enc-noncausal" => {
            let (lower, upper) = capacity_noncausal_bounds(&dist).map_err(|e| e.to_string())?;
            match format {
                "csv" => {
                    out.push_str("regime,lower,upper\n");
                    out.push_str(&format!("enc-noncausal,{lower},{upper}\n"));
                }
                "json" => {
                    out.push_str(
                        &serde_json::json!({
                            "regime": "enc-noncausal",
                            "lower": lower,
                            "upper": upper,
                        })
                        .to_string(),
                    );
                    out.push('\n');
                }
                other => return Err(format!("unknown format \"{other}\"")),
            }
        }
        name => {
            let mode: CsiMode = name
                .parse()
                .map_err(|_| format!("unknown regime \"{name}\""))?;
            let r = compute_regime(&dist, mode, eps)?;
            match format {
                "csv" => {
                    out.push_str("regime,value,lower,upper,method\n");
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        name,
                        r.value,
                        r.lower_bound,
                        r.upper_bound,
                        serde_json::to_value(r.method).unwrap().as_str().unwrap()
                    ));
                }
                "json" => {
                    out.push_str(&serde_json::to_string(&r).unwrap());
                    out.push('\n');
                }
                other => return Err(format!("unknown format \"{other}\"")),
            }
        }
    }
    write_output(&common.out, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_table1(eps: f64, lambda1: f64, lambda2: f64, seed: u64) -> Result<ExitCode, String> {
    let dist = StateDistribution::maes_hybrid(lambda1, lambda2).map_err(|e| e.to_string())?;
    println!("# seed={seed} eps={eps} lambda1={lambda1} lambda2={lambda2}");
    let got = [
        capacity_no_csi(&dist).value,
        capacity_csi_encoder_causal(&dist).value,
        capacity_csi_decoder(&dist, eps)
            .map_err(|e| e.to_string())?
            .value,
        capacity_csi_both(&dist, eps).map_err(|e| e.to_string())?.value,
    ];
    let mut all_ok = true;
    for (i, (name, want)) in REFERENCE_CAPACITIES.iter().enumerate() {
        let ok = (got[i] - want).abs() < CELL_TOL;
        all_ok &= ok;
        println!(
            "{name:<10} {:.4}  expected {want:.4} +-{CELL_TOL}  {}",
            got[i],
            if ok { "PASS" } else { "FAIL" }
        );
    }
    let deltas = [got[3] - got[0], got[1] - got[0]];
    let rel = deltas[0] / got[0] * 100.0;
    for (i, (name, want)) in REFERENCE_DELTAS.iter().enumerate() {
        let ok = (deltas[i] - want).abs() < DELTA_TOL;
        all_ok &= ok;
        let extra = if i == 0 {
            format!("  (relative gain {rel:.1}%)")
        } else {
            String::new()
        };
        println!(
            "delta {name:<8} {:.4}  expected {want:.4} +-{DELTA_TOL}  {}{extra}",
            deltas[i],
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_simulate(common: &Common, mode: &str, n: usize) -> Result<ExitCode, String> {
    let dist = load_dist(&common.dist)?;
    let mode: CsiMode = mode
        .parse()
        .map_err(|_| format!("unknown mode \"{mode}\""))?;
    if mode == CsiMode::EncoderNonCausal {
        return Err("enc-noncausal cannot be simulated single-letter".into());
    }
    use rand::{Rng, SeedableRng};
    let mut in_rng = rand_chacha::ChaCha12Rng::seed_from_u64(common.seed ^ 0x1357_9bdf);
    let input: Vec<u8> = (0..n).map(|_| in_rng.random_range(0..2) as u8).collect();
    let trace = transmit(&dist, &input, mode, common.seed);
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).map_err(|e| e.to_string())?;
    write_output(&common.out, &String::from_utf8(csv).expect("ascii"))?;

    if n >= 10_000 {
        let mi = estimate_mutual_information(&dist, mode, n, common.seed)
            .map_err(|e| e.to_string())?;
        let analytic = match mode {
            CsiMode::None => capacity_no_csi(&dist).value,
            CsiMode::EncoderCausal => capacity_csi_encoder_causal(&dist).value,
            CsiMode::Decoder | CsiMode::Both => capacity_csi_both(&dist, 1e-3)
                .map_err(|e| e.to_string())?
                .value,
            CsiMode::EncoderNonCausal => unreachable!(),
        };
        let tol = (3.0 * mi.std_error).max(0.01);
        let agree = (mi.estimate - analytic).abs() < tol;
        println!(
            "MI({mode}) = {:.4} +- {:.4} SE; analytic {:.4}; |diff| {} {:.4} => {}",
            mi.estimate,
            mi.std_error,
            analytic,
            if agree { "<=" } else { ">" },
            tol,
            if agree { "AGREE" } else { "DISAGREE" }
        );
    } else {
        println!("MI skipped: n = {n} below the 10^4 sample floor");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fec_sweep(
    common: &Common,
    margins: &str,
    n_bins: usize,
    blocks: usize,
    block_budget: usize,
    eps: f64,
) -> Result<ExitCode, String> {
    let dist = load_dist(&common.dist)?;
    let margins: Vec<f64> = margins
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("margin \"{s}\": {e}"))
        })
        .collect::<Result<_, _>>()?;
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", common.seed));
    out.push_str("margin,n_bins,realized_rate,bler,n_blocks,seed\n");
    for &margin in &margins {
        let plan = plan_binned_codes(&dist, block_budget, n_bins, eps, margin)
            .map_err(|e| e.to_string())?;
        let stats = run_binned_transmission(&plan, &dist, blocks, common.seed)
            .map_err(|e| e.to_string())?;
        out.push_str(&format!(
            "{margin},{n_bins},{:.6},{:.6},{blocks},{}\n",
            stats.aggregate_rate, stats.block_error_rate, common.seed
        ));
    }
    write_output(&common.out, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_puf_demo(
    common: &Common,
    n_cells: usize,
    key_bits: usize,
    trials: usize,
) -> Result<ExitCode, String> {
    let dist = load_dist(&common.dist)?;
    let mut tagged_fail = 0u32;
    let mut untagged_fail = 0u32;
    let mut tagged_only = 0u32;
    let mut untagged_only = 0u32;
    for t in 0..trials as u64 {
        let dev = make_device(&dist, n_cells, common.seed.wrapping_add(t))
            .map_err(|e| e.to_string())?;
        let (k_t, h_t) = enroll(&dev, key_bits, common.seed, true).map_err(|e| e.to_string())?;
        let (k_u, h_u) = enroll(&dev, key_bits, common.seed, false).map_err(|e| e.to_string())?;
        let mut dev_t = dev.clone();
        let mut dev_u = dev;
        let read_seed = common.seed.wrapping_add(1_000_000 + t);
        let t_ok = matches!(reproduce(&mut dev_t, &h_t, read_seed), Ok(k) if k == k_t);
        let u_ok = matches!(reproduce(&mut dev_u, &h_u, read_seed), Ok(k) if k == k_u);
        tagged_fail += u32::from(!t_ok);
        untagged_fail += u32::from(!u_ok);
        tagged_only += u32::from(!t_ok && u_ok);
        untagged_only += u32::from(t_ok && !u_ok);
    }
    let summary = serde_json::json!({
        "seed": common.seed,
        "n_cells": n_cells,
        "key_bits": key_bits,
        "trials": trials,
        "tagged": {
            "failures": tagged_fail,
            "successes": trials as u32 - tagged_fail,
        },
        "untagged": {
            "failures": untagged_fail,
            "successes": trials as u32 - untagged_fail,
        },
        "paired": {
            "untagged_only_failures": untagged_only,
            "tagged_only_failures": tagged_only,
        },
    });
    write_output(&common.out, &format!("{summary}\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot_pdf(common: &Common, points: usize) -> Result<ExitCode, String> {
    let dist = load_dist(&common.dist)?;
    if points < 2 {
        return Err("need at least 2 points".into());
    }
    let grid: Vec<f64> = match &dist {
        StateDistribution::MaesHybrid { .. } => {
            // Uniform in u = Phi^-1(p): dense at the endpoint spikes.
            use statrs::distribution::ContinuousCDF;
            let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
            let b = 34.0;
            (0..points)
                .map(|k| normal.cdf(-b + 2.0 * b * k as f64 / (points - 1) as f64))
                .collect()
        }
        StateDistribution::PiecewiseConstant { .. } => (0..points)
            .map(|k| k as f64 / (points - 1) as f64)
            .collect(),
        _ => {
            return Err("plot-pdf needs a continuous distribution (atoms have no density)".into())
        }
    };
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", common.seed));
    out.push_str("p,f_p\n");
    for &p in &grid {
        let v = match dist.pdf(p).map_err(|e| e.to_string())? {
            Density::Value(v) => v,
            Density::Atom(_) => unreachable!("continuous kinds only"),
        };
        out.push_str(&format!("{p:e},{v:e}\n"));
    }
    write_output(&common.out, &out)?;
    Ok(ExitCode::SUCCESS)
}
