//! Command-line front end: chain inspection, square-function reports,
//! identity checks, the counterexample scan, and Monte Carlo verification.
//! Exit codes: 0 success, 1 verification failure, 2 bad configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpform::brown;
use jumpform::chainfile::{load_chain, load_field};
use jumpform::mc::{run_mc, McConfig, StartState};
use jumpform::model::{connected_components, Generator, JumpKernel, StateSpace};
use jumpform::quad::QuadratureConfig;
use jumpform::spectral::{spectral_decompose, SpectralData};
use jumpform::squarefn::compute_report;
use jumpform::verify::{
    hardy_stein_check, lp_estimate_scan, random_field, scan_csv, stein_maximal_check, Baseline,
    ScanKind,
};
use jumpform::Error;

#[derive(Parser)]
#[command(name = "jumpform", about = "Square functions of finite-state jump processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a chain file and print its spectrum.
    Inspect { chainfile: PathBuf },
    /// Compute the square functions G, G̃, H, H̃ and their p-norms.
    Squarefns {
        chainfile: PathBuf,
        /// Field file, or `random:<seed>` for a seeded random field.
        #[arg(long)]
        f: String,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        p: Vec<f64>,
        /// Relative quadrature tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Check the Hardy-Stein identity on seeded random fields.
    HardyStein {
        chainfile: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1.5,2,3")]
        p: Vec<f64>,
        /// Number of seeded random fields.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Scan the removed-segment chain family: ‖G̃‖_p/‖f‖_p vs ‖H‖_p/‖f‖_p.
    Brown {
        #[arg(long, value_delimiter = ',', default_value = "4")]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
        n: Vec<usize>,
    },
    /// Monte Carlo verification of the parabolic-martingale brackets.
    Mc {
        chainfile: PathBuf,
        #[arg(long = "T", default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the full verification suite.
    VerifyAll(VerifyArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Stored ratio extremes; fresh extremes regressing >1% fail the run.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Write the fresh extremes to this file.
    #[arg(long)]
    write_baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("JUMPFORM_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::BadConfig(_)
                | Error::DetailedBalanceViolation { .. }
                | Error::NegativeRate { .. }
                | Error::NegativeKilling { .. }
                | Error::DimensionMismatch { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn decompose(
    chainfile: &PathBuf,
) -> jumpform::Result<(StateSpace, JumpKernel, Generator, SpectralData)> {
    let (space, kernel, gen) = load_chain(chainfile)?;
    let spec = spectral_decompose(&gen, &space)?;
    Ok((space, kernel, gen, spec))
}

fn run(command: Command) -> jumpform::Result<bool> {
    match command {
        Command::Inspect { chainfile } => {
            let (space, kernel, gen, spec) = decompose(&chainfile)?;
            println!("states: {}", space.n());
            println!(
                "conservative: {}  components: {}",
                gen.conservative(),
                connected_components(&kernel).iter().max().unwrap_or(&0) + 1
            );
            println!("spectral gap: {:.12e}", spec.gap());
            println!("eigenvalues:");
            for (k, l) in spec.lambdas().iter().enumerate() {
                println!("  λ_{k} = {l:.12e}");
            }
            Ok(true)
        }
        Command::Squarefns {
            chainfile,
            f,
            p,
            tol,
        } => {
            let (space, kernel, _, spec) = decompose(&chainfile)?;
            let field = if let Some(seed) = f.strip_prefix("random:") {
                let seed: u64 = seed
                    .parse()
                    .map_err(|e| Error::BadConfig(format!("bad seed in --f: {e}")))?;
                random_field(seed, space.n())
            } else {
                load_field(&PathBuf::from(&f), space.n())?
            };
            let config = QuadratureConfig {
                rel_tol: tol,
                ..QuadratureConfig::default()
            };
            let report = compute_report(&spec, &kernel, &space, &field, &p, &config)?;
            print!("{}", report.values_csv());
            println!();
            print!("{}", report.norms_csv());
            Ok(true)
        }
        Command::HardyStein { chainfile, p, seeds } => {
            let (space, kernel, _, spec) = decompose(&chainfile)?;
            let config = QuadratureConfig::default();
            let mut ok = true;
            println!("seed,p,lhs,rhs,rel_err");
            for seed in 0..seeds {
                let f = random_field(seed, space.n());
                for &pp in &p {
                    let out = hardy_stein_check(&spec, &kernel, &space, &f, pp, &config)?;
                    println!(
                        "{seed},{pp},{:.12e},{:.12e},{:.3e}",
                        out.lhs, out.rhs, out.rel_err
                    );
                    ok &= out.rel_err <= 1e-8;
                }
            }
            Ok(ok)
        }
        Command::Brown { p, n } => {
            for &pp in &p {
                let rows = brown::ratio_scan(pp, &n)?;
                print!("{}", brown::scan_csv(&rows));
            }
            Ok(true)
        }
        Command::Mc {
            chainfile,
            t,
            paths,
            seed,
        } => {
            let (space, kernel, gen, spec) = decompose(&chainfile)?;
            let config = McConfig::new(t, paths, seed, StartState::Stationary)?;
            let f = random_field(seed ^ 0xfeed, space.n());
            let report = run_mc(&space, &kernel, &gen, &spec, &f, &config)?;
            print!("{}", report.csv(seed, space.n(), t));
            let ok = (report.est_m2 - report.est_sharp).abs()
                <= 3.0 * (report.se_m2 + report.se_sharp)
                && (report.est_square - report.est_sharp).abs()
                    <= 3.0 * (report.se_square + report.se_sharp);
            Ok(ok)
        }
        Command::VerifyAll(args) => verify_all(&args),
    }
}

fn check(name: &str, ok: bool, all_ok: &mut bool) {
    println!("{}  {}", if ok { "PASS" } else { "FAIL" }, name);
    *all_ok &= ok;
}

fn verify_all(args: &VerifyArgs) -> jumpform::Result<bool> {
    let mut all_ok = true;
    let config = QuadratureConfig::default();
    let base = args.seed_base;

    // Eigenpair and closed-form G̃ on the removed-segment family.
    let mut eigen_ok = true;
    let mut gt_ok = true;
    for n in [1, 2, 4, 8] {
        let (space, kernel, gen, spec) = brown::build_brown_chain(n)?;
        eigen_ok &= brown::verify_eigenpair(&gen, &spec)? <= 1e-12;
        let sdata = spectral_decompose(&gen, &space)?;
        let computed =
            jumpform::squarefn::square_g_tilde(&sdata, &kernel, &space, spec.f(), &config)?;
        let closed = brown::closed_form_g_tilde(&spec);
        gt_ok &= computed
            .iter()
            .zip(&closed)
            .all(|(a, b)| (a - b).abs() <= 1e-10 * b.max(1.0));
    }
    check("eigenpair residual <= 1e-12", eigen_ok, &mut all_ok);
    check("closed-form G-tilde matches spectral", gt_ok, &mut all_ok);

    // Divergence of the G̃ ratio, boundedness of the H ratio.
    let rows = brown::ratio_scan(4.0, &[8, 16, 32, 64, 128, 256])?;
    let increasing = rows.windows(2).all(|w| w[1].ratio_g_tilde > w[0].ratio_g_tilde);
    let last = rows.last().expect("nonempty scan");
    let near_target =
        ((last.normalized - last.target_constant) / last.target_constant).abs() <= 0.05;
    let h_max = rows.iter().map(|r| r.ratio_h).fold(0.0f64, f64::max);
    check("G-tilde ratio strictly increasing", increasing, &mut all_ok);
    check("normalized ratio within 5% of target", near_target, &mut all_ok);
    check(
        "H ratio bounded (max <= 2x first)",
        h_max <= 2.0 * rows[0].ratio_h,
        &mut all_ok,
    );

    // Hardy-Stein on seeded random chains.
    let mut hs_ok = true;
    for seed in base..base + 10 {
        let (space, kernel, gen) = jumpform::verify::random_conservative_chain(seed, 20);
        let spec = spectral_decompose(&gen, &space)?;
        let f = random_field(seed ^ 0xaaaa, 20);
        for &p in &[1.5, 2.0, 3.0] {
            let out = hardy_stein_check(&spec, &kernel, &space, &f, p, &config)?;
            hs_ok &= out.rel_err <= 1e-8;
        }
    }
    check("Hardy-Stein identity rel err <= 1e-8", hs_ok, &mut all_ok);

    // Stein maximal inequality.
    let mut stein_ok = true;
    for seed in base..base + 25 {
        let (space, _, gen) = jumpform::verify::random_conservative_chain(seed, 10);
        let spec = spectral_decompose(&gen, &space)?;
        let f = random_field(seed ^ 0xbbbb, 10);
        let mut grid: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        grid.push(50.0 / spec.gap());
        for &p in &[1.5, 2.0, 4.0] {
            stein_ok &= stein_maximal_check(&spec, &space, &f, p, &grid)?.ok;
        }
    }
    check("Stein maximal inequality", stein_ok, &mut all_ok);

    // L^p estimate scans against the stored baseline.
    let mut rows = Vec::new();
    for kind in [
        ScanKind::GTildeUpper12,
        ScanKind::GTildeLower2Inf,
        ScanKind::HUpper2Inf,
        ScanKind::HLower12,
        ScanKind::HLower3Inf,
        ScanKind::HTildeUpper2Inf,
        ScanKind::HTildeLower3Inf,
    ] {
        let p_list: Vec<f64> = match kind {
            ScanKind::GTildeUpper12 | ScanKind::HLower12 => vec![1.5, 2.0],
            ScanKind::GTildeLower2Inf | ScanKind::HUpper2Inf | ScanKind::HTildeUpper2Inf => {
                vec![2.0, 4.0]
            }
            ScanKind::HLower3Inf => vec![3.0, 4.0],
            ScanKind::HTildeLower3Inf => vec![2.5, 3.0, 4.0],
        };
        rows.extend(lp_estimate_scan(kind, 12, base..base + 5, &p_list, &config)?);
    }
    print!("{}", scan_csv(&rows));
    let fresh = Baseline::from_rows(&rows);
    if let Some(path) = &args.baseline {
        let stored = Baseline::from_json(&std::fs::read_to_string(path).map_err(|e| {
            Error::BadConfig(format!("cannot read baseline {}: {e}", path.display()))
        })?)?;
        let regressions = stored.regressions(&fresh);
        for r in &regressions {
            eprintln!("baseline regression: {r}");
        }
        check("no baseline regressions", regressions.is_empty(), &mut all_ok);
    }
    if let Some(path) = &args.write_baseline {
        std::fs::write(path, fresh.to_json())
            .map_err(|e| Error::BadConfig(format!("cannot write baseline: {e}")))?;
    }

    // Monte Carlo bracket identities on a small chain.
    let (space, kernel, gen) = jumpform::verify::random_conservative_chain(base + 1, 6);
    let spec = spectral_decompose(&gen, &space)?;
    let f = random_field(base ^ 0xcccc, 6);
    let mc_config = McConfig::new(2.0, 50_000, base + 7, StartState::Stationary)?;
    let report = run_mc(&space, &kernel, &gen, &spec, &f, &mc_config)?;
    let mc_ok = (report.est_m2 - report.est_sharp).abs() <= 3.0 * (report.se_m2 + report.se_sharp)
        && (report.est_square - report.est_sharp).abs()
            <= 3.0 * (report.se_square + report.se_sharp);
    check("MC bracket identities within 3 SE", mc_ok, &mut all_ok);

    Ok(all_ok)
}
