//! Implementations of the mplab subcommands.

use anyhow::{anyhow, bail, Context};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use multiperiodic::analytics::{
    count_types_series, empirical_marginal, entropy_upper_bound, fit_power_law,
    log_spaced_checkpoints, AnalyticsError,
};
use multiperiodic::learner::{
    fit_scaling_exponents, scaling_scan, LearnerError, ScalingTable, ScanConfig, ScanRow,
};
use multiperiodic::santafe::{entropy_decomposition_check, Knowledge, KnowledgeMode};
use multiperiodic::schedule::{Finiteness, PeriodSchedule, ScheduleError};
use multiperiodic::{generate_prefix, decimate, Generator, SeedMode};

use crate::manifest::{write_output, RunManifest};
use crate::svg::{LogLogChart, Series, PALETTE};
use crate::{
    EntropyArgs, FitArgs, GenerateArgs, PlotArgs, PlotCmd, ScanArgs, VerifyArgs, EXIT_FAIL,
    EXIT_OK, EXIT_UNSUPPORTED, EXIT_USAGE,
};

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CmdError {}

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn unsupported(msg: impl Into<String>) -> CmdError {
    CmdError {
        code: EXIT_UNSUPPORTED,
        message: msg.into(),
    }
}

fn failure(msg: impl Into<String>) -> CmdError {
    CmdError {
        code: EXIT_FAIL,
        message: msg.into(),
    }
}

fn map_schedule_err(e: ScheduleError) -> CmdError {
    match e {
        ScheduleError::Invalid(_) => usage(e.to_string()),
        ScheduleError::Unsupported(_) => unsupported(e.to_string()),
        other => failure(other.to_string()),
    }
}

fn map_analytics_err(e: AnalyticsError) -> CmdError {
    match e {
        AnalyticsError::Unsupported(_) | AnalyticsError::BudgetExceeded { .. } => {
            unsupported(e.to_string())
        }
        AnalyticsError::Schedule(se) => map_schedule_err(se),
        other => failure(other.to_string()),
    }
}

fn map_learner_err(e: LearnerError) -> CmdError {
    match e {
        LearnerError::Unsupported(_) => unsupported(e.to_string()),
        LearnerError::Analytics(ae) => map_analytics_err(ae),
        LearnerError::Schedule(se) => map_schedule_err(se),
        other => failure(other.to_string()),
    }
}

pub fn parse_schedule(lit: &str) -> Result<PeriodSchedule, CmdError> {
    lit.parse::<PeriodSchedule>().map_err(map_schedule_err)
}

/// Seed-mode literal: `minimal`, `list:1,2,3`, or `random`.
pub fn parse_seed_mode(s: &str, rng_seed: Option<u64>) -> Result<SeedMode, CmdError> {
    match s {
        "minimal" => Ok(SeedMode::Minimal),
        "random" => {
            let seed = rng_seed
                .ok_or_else(|| usage("--rng-seed is mandatory with --seeds random"))?;
            Ok(SeedMode::RandomUniform { rng_seed: seed })
        }
        other => {
            if let Some(list) = other.strip_prefix("list:") {
                let vals: Result<Vec<u64>, _> =
                    list.split(',').map(|v| v.trim().parse::<u64>()).collect();
                return Ok(SeedMode::FixedList(
                    vals.map_err(|_| usage(format!("bad seed list {list:?}")))?,
                ));
            }
            Err(usage(format!(
                "bad seed mode {other:?}; expected minimal, list:..., or random"
            )))
        }
    }
}

/// Grid literal: `pow2:4..14`, `pow10:3..7`, or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<u64>, CmdError> {
    let range = |body: &str| -> Result<(u32, u32), CmdError> {
        let (a, b) = body
            .split_once("..")
            .ok_or_else(|| usage(format!("bad grid range {body:?}")))?;
        Ok((
            a.parse().map_err(|_| usage(format!("bad grid bound {a:?}")))?,
            b.parse().map_err(|_| usage(format!("bad grid bound {b:?}")))?,
        ))
    };
    if let Some(body) = s.strip_prefix("pow2:") {
        let (a, b) = range(body)?;
        return Ok((a..=b).map(|e| 1u64 << e).collect());
    }
    if let Some(body) = s.strip_prefix("pow10:") {
        let (a, b) = range(body)?;
        return Ok((a..=b).map(|e| 10u64.pow(e)).collect());
    }
    let vals: Result<Vec<u64>, _> = s.split(',').map(|v| v.trim().parse::<u64>()).collect();
    vals.map_err(|_| usage(format!("bad grid {s:?}")))
}

pub fn enumeration_budget() -> u64 {
    std::env::var("MPLAB_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1_000_000)
}

fn schedule_label(s: &PeriodSchedule) -> String {
    s.literal()
        .replace([':', ';', '='], "_")
        .replace('/', "d")
        .replace(',', "-")
}

fn init_jobs(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
}

// ---------------------------------------------------------------------------
// generate

pub fn cmd_generate(args: &GenerateArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    let schedule = parse_schedule(&args.schedule)?;
    let seed_mode = parse_seed_mode(&args.seeds, args.rng_seed)?;
    let knowledge = match &args.knowledge {
        None => None,
        Some(lit) => Some(parse_knowledge(lit)?),
    };

    let tokens = generate_prefix(&schedule, &seed_mode, args.tokens)
        .map_err(|e| failure(format!("generation aborted: {e}")))?;

    let mut manifest = RunManifest::new(argv);
    manifest.schedule = Some(schedule.literal());
    manifest.seeds = Some(args.seeds.clone());
    manifest.rng_seed = args.rng_seed;

    let out_dir = args.out_dir.clone();
    let (name, bytes) = match (&knowledge, args.format.as_str()) {
        (None, "txt") | (None, "csv") => {
            let mut body = String::new();
            for k in &tokens {
                writeln!(body, "{k}").unwrap();
            }
            ("tokens.txt".to_string(), body.into_bytes())
        }
        (None, "bin") => {
            let mut body = Vec::with_capacity(tokens.len() * 4);
            for &k in &tokens {
                let k32 = u32::try_from(k)
                    .map_err(|_| failure(format!("token {k} exceeds the u32 dump format")))?;
                body.extend_from_slice(&k32.to_le_bytes());
            }
            ("tokens.bin".to_string(), body)
        }
        (Some(kn), "csv") | (Some(kn), "txt") => {
            let mut body = String::from("t,k,z\n");
            for (i, &k) in tokens.iter().enumerate() {
                writeln!(body, "{},{k},{}", i + 1, kn.fact(k) as u8).unwrap();
            }
            ("tokens.csv".to_string(), body.into_bytes())
        }
        (Some(kn), "bin") => {
            let mut body = Vec::with_capacity(tokens.len() * 5);
            for &k in &tokens {
                let k32 = u32::try_from(k)
                    .map_err(|_| failure(format!("token {k} exceeds the u32 dump format")))?;
                body.extend_from_slice(&k32.to_le_bytes());
                body.push(kn.fact(k) as u8);
            }
            ("tokens.bin".to_string(), body)
        }
        (_, other) => return Err(usage(format!("unsupported --format {other} for generate"))),
    };
    write_output(&mut manifest, &out_dir, &name, &bytes)
        .map_err(|e| failure(e.to_string()))?;
    let digest = manifest
        .write(&out_dir, "generate")
        .map_err(|e| failure(e.to_string()))?;
    println!(
        "wrote {} ({} tokens), manifest digest {digest}",
        out_dir.join(&name).display(),
        tokens.len()
    );
    Ok(EXIT_OK)
}

fn parse_knowledge(lit: &str) -> Result<Knowledge, CmdError> {
    let (kind, seed) = lit
        .split_once(':')
        .ok_or_else(|| usage(format!("bad knowledge literal {lit:?}; use iid:SEED or fixed:SEED")))?;
    let seed: u64 = seed
        .parse()
        .map_err(|_| usage(format!("bad knowledge seed {seed:?}")))?;
    match kind {
        "iid" => Ok(Knowledge::new(KnowledgeMode::IidFair { rng_seed: seed })),
        "fixed" => Ok(Knowledge::new(KnowledgeMode::FixedPseudorandom { seed })),
        other => Err(usage(format!("unknown knowledge mode {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// verify

pub fn cmd_verify(args: &VerifyArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    let schedule = parse_schedule(&args.schedule)?;
    let rng_seed = args
        .rng_seed
        .ok_or_else(|| usage("--rng-seed is mandatory for verify (random-seed runs)"))?;
    if schedule.classify_finiteness(&SeedMode::RandomUniform { rng_seed }) != Finiteness::Finite {
        return Err(unsupported(format!(
            "{schedule} is not finite under random seeds; nothing to verify"
        )));
    }
    let r_max = args.r_max;
    let t = args.tokens;
    let mut all_pass = true;
    let mut report = String::new();

    let stream = generate_prefix(&schedule, &SeedMode::Minimal, t)
        .map_err(|e| failure(e.to_string()))?;

    // Marginal law: empirical frequencies against the closed-form product.
    let est = empirical_marginal(stream.iter().copied(), t, 0).map_err(map_analytics_err)?;
    let mut max_dev = 0.0f64;
    for r in 1..=r_max {
        max_dev = max_dev.max((est.f_hat(r) - schedule.marginal_f(r)).abs());
    }
    let pass = max_dev <= args.tolerance;
    all_pass &= pass;
    writeln!(
        report,
        "marginal-law        {}  max |f_hat - f| = {max_dev:.5} over r ≤ {r_max} (tol {})",
        if pass { "PASS" } else { "FAIL" },
        args.tolerance
    )
    .unwrap();

    // Waiting times: closed form equals first occurrence, exactly.
    let mut first_occurrence: BTreeMap<u64, u64> = BTreeMap::new();
    for (i, &k) in stream.iter().enumerate() {
        first_occurrence.entry(k).or_insert(i as u64 + 1);
    }
    let mut wait_checked = 0u64;
    let mut wait_bad = 0u64;
    for r in 1..=r_max {
        match schedule.waiting_closed_form(r) {
            Ok(w) => {
                if let Some(w64) = w.to_u64() {
                    if w64 <= t {
                        wait_checked += 1;
                        if first_occurrence.get(&r).copied() != Some(w64) {
                            wait_bad += 1;
                        }
                    }
                }
            }
            Err(_) => break, // unit period reached; later types never occur
        }
    }
    let pass = wait_bad == 0 && wait_checked > 0;
    all_pass &= pass;
    writeln!(
        report,
        "waiting-times       {}  {wait_checked} closed-form values vs first occurrences, {wait_bad} mismatches",
        if pass { "PASS" } else { "FAIL" }
    )
    .unwrap();

    // Uniform waiting bound over random-seed runs.
    let reps = args.reps;
    let mut bound_violations = 0u64;
    let support_cap = schedule.first_unit_period().unwrap_or(u64::MAX);
    let r_top = r_max.min(support_cap);
    let horizon = (1..=r_top)
        .map(|r| {
            schedule
                .wbar_uniform_bound(r)
                .map(|w| w.to_f64().unwrap_or(f64::INFINITY).ceil() as u64)
        })
        .collect::<Result<Vec<u64>, _>>()
        .map_err(map_schedule_err)?
        .into_iter()
        .max()
        .unwrap_or(0);
    for i in 0..reps {
        let mode = SeedMode::RandomUniform {
            rng_seed: multiperiodic::util::derive_seed(rng_seed, i),
        };
        let mut g = Generator::new(schedule.clone(), mode);
        let mut first: BTreeMap<u64, u64> = BTreeMap::new();
        let mut found = 0u64;
        for pos in 1..=horizon {
            let k = g.next_token().map_err(|e| failure(e.to_string()))?;
            if k <= r_top && !first.contains_key(&k) {
                first.insert(k, pos);
                found += 1;
                if found == r_top {
                    break;
                }
            }
        }
        for r in 1..=r_top {
            let wbar = schedule.wbar_uniform_bound(r).map_err(map_schedule_err)?;
            match first.get(&r) {
                Some(&pos) => {
                    if BigRational::from_integer(pos.into()) > wbar {
                        bound_violations += 1;
                    }
                }
                None => bound_violations += 1,
            }
        }
    }
    let pass = bound_violations == 0;
    all_pass &= pass;
    writeln!(
        report,
        "uniform-bound       {}  {reps} random-seed runs, r ≤ {r_top}, {bound_violations} violations",
        if pass { "PASS" } else { "FAIL" }
    )
    .unwrap();

    // Decimated periodicity: in the ≥r view, r occurs exactly every π_r-th
    // position with the phase fixed by the seed.
    let check_len = t.min(100_000);
    let mut period_bad = 0u64;
    for r in 1..=r_top {
        let view = decimate(&stream[..check_len as usize], r);
        let pi = schedule.try_period_at(r).map_err(map_schedule_err)?;
        let mut last: Option<u64> = None;
        for (pos0, &k) in view.iter().enumerate() {
            let pos = pos0 as u64 + 1;
            if k == r {
                if let Some(prev) = last {
                    if pos - prev != pi {
                        period_bad += 1;
                    }
                } else if pos != 1 {
                    // Minimal seeds: the first slot of the view fires.
                    period_bad += 1;
                }
                last = Some(pos);
            }
        }
    }
    let pass = period_bad == 0;
    all_pass &= pass;
    writeln!(
        report,
        "decimation-period   {}  minimal-seed prefix of {check_len}, {period_bad} phase violations",
        if pass { "PASS" } else { "FAIL" }
    )
    .unwrap();

    print!("{report}");
    if let Some(out_dir) = &args.out_dir {
        let mut manifest = RunManifest::new(argv);
        manifest.schedule = Some(schedule.literal());
        manifest.rng_seed = Some(rng_seed);
        let mut csv_body = String::from("r,f_hat,f_closed,pmf_hat,pmf_closed\n");
        for r in 1..=r_max {
            writeln!(
                csv_body,
                "{r},{},{},{},{}",
                est.f_hat(r),
                schedule.marginal_f(r),
                est.pmf_hat(r),
                schedule.marginal_pmf(r)
            )
            .unwrap();
        }
        write_output(&mut manifest, out_dir, "marginal.csv", csv_body.as_bytes())
            .map_err(|e| failure(e.to_string()))?;
        write_output(&mut manifest, out_dir, "verify_report.txt", report.as_bytes())
            .map_err(|e| failure(e.to_string()))?;
        manifest
            .write(out_dir, "verify")
            .map_err(|e| failure(e.to_string()))?;
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_FAIL })
}

// ---------------------------------------------------------------------------
// entropy

pub fn cmd_entropy(args: &EntropyArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    let schedule = parse_schedule(&args.schedule)?;
    let budget = enumeration_budget();
    let check = entropy_decomposition_check(&schedule, args.tokens, budget)
        .map_err(map_analytics_err)?;
    let scale = if args.bits {
        std::f64::consts::LN_2
    } else {
        1.0
    };
    let unit = if args.bits { "bits" } else { "nats" };

    let mut bounds = Vec::new();
    for &q in &[1.0f64, 2.0, 3.0] {
        if let Ok(b) = entropy_upper_bound(
            &schedule,
            args.tokens,
            q,
            check.e_n_t_f64(),
        ) {
            bounds.push(serde_json::json!({ "q": q, "bound": b / scale }));
        }
    }

    let json = serde_json::json!({
        "schedule": schedule.literal(),
        "t": args.tokens,
        "unit": unit,
        "h_k": check.h_k_nats() / scale,
        "h_x": check.h_x_nats() / scale,
        "e_n_t": check.e_n_t_f64(),
        "identity_exact": check.identity_exact,
        "enumerated": check.enumerated,
        "upper_bounds": bounds,
    });
    let body = serde_json::to_string_pretty(&json).unwrap();
    println!("{body}");
    if let Some(out_dir) = &args.out_dir {
        let mut manifest = RunManifest::new(argv);
        manifest.schedule = Some(schedule.literal());
        write_output(&mut manifest, out_dir, "entropy.json", body.as_bytes())
            .map_err(|e| failure(e.to_string()))?;
        manifest
            .write(out_dir, "entropy")
            .map_err(|e| failure(e.to_string()))?;
    }
    Ok(if check.identity_exact { EXIT_OK } else { EXIT_FAIL })
}

// ---------------------------------------------------------------------------
// scan / fit

fn scan_csv(table: &ScalingTable) -> String {
    let mut body = String::from("c,N,T,A_NT,r_analytic,r_empirical,stderr,error_rate,reps\n");
    for row in &table.rows {
        writeln!(
            body,
            "{},{},{},{},{},{},{},{},{}",
            row.c,
            row.n,
            row.t,
            row.a_nt,
            row.r_analytic,
            row.r_empirical,
            row.stderr,
            row.error_rate,
            row.reps
        )
        .unwrap();
    }
    body
}

pub fn cmd_scan(args: &ScanArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    init_jobs(args.jobs);
    let schedule = parse_schedule(&args.schedule)?;
    let cfg = ScanConfig {
        schedule: schedule.clone(),
        n_grid: parse_grid(&args.n_grid)?,
        t_grid: parse_grid(&args.t_grid)?,
        test_tokens: args.test_tokens,
        reps: args.reps,
        rng_seed: args.rng_seed,
    };
    let table = scaling_scan(&cfg).map_err(map_learner_err)?;
    let body = scan_csv(&table);

    let mut manifest = RunManifest::new(argv);
    manifest.schedule = Some(schedule.literal());
    manifest.rng_seed = Some(args.rng_seed);
    manifest.grids.insert("n_grid".into(), cfg.n_grid.clone());
    manifest.grids.insert("t_grid".into(), cfg.t_grid.clone());
    write_output(&mut manifest, &args.out_dir, "scan.csv", body.as_bytes())
        .map_err(|e| failure(e.to_string()))?;
    let digest = manifest
        .write(&args.out_dir, "scan")
        .map_err(|e| failure(e.to_string()))?;
    println!(
        "wrote {} ({} rows), manifest digest {digest}",
        args.out_dir.join("scan.csv").display(),
        table.rows.len()
    );
    Ok(EXIT_OK)
}

pub fn read_scan_csv(path: &Path) -> anyhow::Result<Vec<ScanRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 9 {
            bail!("scan.csv row has {} fields, expected 9", rec.len());
        }
        rows.push(ScanRow {
            c: rec[0].parse()?,
            n: rec[1].parse()?,
            t: rec[2].parse()?,
            a_nt: rec[3].parse()?,
            r_analytic: rec[4].parse()?,
            r_empirical: rec[5].parse()?,
            stderr: rec[6].parse()?,
            error_rate: rec[7].parse()?,
            reps: rec[8].parse()?,
        });
    }
    Ok(rows)
}

fn schedule_for_scan(args_schedule: &Option<String>, scan_path: &Path) -> anyhow::Result<String> {
    if let Some(lit) = args_schedule {
        return Ok(lit.clone());
    }
    let manifest_path = scan_path.with_file_name("scan.manifest.json");
    let body = std::fs::read_to_string(&manifest_path).with_context(|| {
        format!(
            "no --schedule given and {} not found",
            manifest_path.display()
        )
    })?;
    let v: serde_json::Value = serde_json::from_str(&body)?;
    v.get("schedule")
        .and_then(|s| s.as_str())
        .map(String::from)
        .ok_or_else(|| anyhow!("scan manifest has no schedule field"))
}

pub fn cmd_fit(args: &FitArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    let rows = read_scan_csv(&args.scan).map_err(|e| failure(e.to_string()))?;
    let lit = schedule_for_scan(&args.schedule, &args.scan).map_err(|e| usage(e.to_string()))?;
    let schedule = parse_schedule(&lit)?;
    let table = ScalingTable {
        schedule: schedule.clone(),
        test_tokens: 0,
        rows,
    };
    let fit = fit_scaling_exponents(&table).map_err(map_learner_err)?;
    let json = serde_json::json!({
        "gamma_N": fit.gamma_n,
        "gamma_T": fit.gamma_t,
        "N0": fit.n0,
        "T0": fit.t0,
        "constraint_residual": fit.constraint_residual,
    });
    let body = serde_json::to_string_pretty(&json).unwrap();
    println!("{body}");
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| args.scan.parent().unwrap_or(Path::new(".")).to_path_buf());
    let mut manifest = RunManifest::new(argv);
    manifest.schedule = Some(schedule.literal());
    write_output(&mut manifest, &out_dir, "fit.json", body.as_bytes())
        .map_err(|e| failure(e.to_string()))?;
    manifest
        .write(&out_dir, "fit")
        .map_err(|e| failure(e.to_string()))?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// plot

pub fn cmd_plot(args: &PlotArgs, argv: Vec<String>) -> Result<i32, CmdError> {
    match &args.cmd {
        PlotCmd::TypeGrowth {
            schedules,
            tokens,
            checkpoints_per_decade,
            out_dir,
        } => plot_type_growth(schedules, *tokens, *checkpoints_per_decade, out_dir, argv),
        PlotCmd::Risk { scan, schedule, out_dir } => plot_risk(scan, schedule, out_dir, argv),
    }
}

fn plot_type_growth(
    schedules: &str,
    tokens: u64,
    per_decade: u32,
    out_dir: &Path,
    argv: Vec<String>,
) -> Result<i32, CmdError> {
    let mut manifest = RunManifest::new(argv);
    manifest.schedule = Some(schedules.to_string());
    let mut chart_series = Vec::new();
    let lits: Vec<&str> = schedules.split(',').collect();
    // Fit range discards the transient prefix (t < 10^3).
    let fit_from = 1_000u64.min(tokens);
    for (i, lit) in lits.iter().enumerate() {
        let schedule = parse_schedule(lit)?;
        let cps = log_spaced_checkpoints(1, tokens, per_decade);
        let mut gen = Generator::new(schedule.clone(), SeedMode::Minimal);
        let series = count_types_series(
            std::iter::from_fn(|| gen.next_token().ok()),
            &cps,
        )
        .map_err(map_analytics_err)?;

        let label = schedule_label(&schedule);
        let mut csv_body = String::from("t,n_t,M_t\n");
        for ((&t, &n), &m) in series
            .checkpoints
            .iter()
            .zip(series.n_t.iter())
            .zip(series.m_t.iter())
        {
            writeln!(csv_body, "{t},{n},{m}").unwrap();
        }
        write_output(
            &mut manifest,
            out_dir,
            &format!("type_growth_{label}.csv"),
            csv_body.as_bytes(),
        )
        .map_err(|e| failure(e.to_string()))?;

        let points: Vec<(f64, f64)> = series
            .checkpoints
            .iter()
            .zip(series.n_t.iter())
            .filter(|(&t, _)| t >= fit_from)
            .map(|(&t, &n)| (t as f64, n as f64))
            .collect();
        let fit = fit_power_law(&points).map_err(map_analytics_err)?;
        let mut fit_body = String::from("exponent,constant,r2,range\n");
        writeln!(
            fit_body,
            "{},{},{},{}..{}",
            fit.exponent,
            fit.log_constant.exp(),
            fit.r_squared,
            fit.fit_range.0,
            fit.fit_range.1
        )
        .unwrap();
        write_output(
            &mut manifest,
            out_dir,
            &format!("fit_{label}.csv"),
            fit_body.as_bytes(),
        )
        .map_err(|e| failure(e.to_string()))?;

        let color = PALETTE[i % PALETTE.len()].to_string();
        chart_series.push(Series {
            label: format!("{lit}  n_t"),
            points: series
                .checkpoints
                .iter()
                .zip(series.n_t.iter())
                .map(|(&t, &n)| (t as f64, n as f64))
                .collect(),
            color: color.clone(),
            dashed: false,
        });
        chart_series.push(Series {
            label: format!("{lit}  fit t^{:.3}", fit.exponent),
            points: vec![
                (
                    fit_from as f64,
                    (fit.log_constant + fit.exponent * (fit_from as f64).ln()).exp(),
                ),
                (
                    tokens as f64,
                    (fit.log_constant + fit.exponent * (tokens as f64).ln()).exp(),
                ),
            ],
            color,
            dashed: true,
        });
    }

    let digest_preview = manifest.compute_content_digest();
    let chart = LogLogChart {
        title: "Distinct types vs sequence length (minimal seeds)".into(),
        x_label: "t".into(),
        y_label: "n_t".into(),
        series: chart_series,
        footer: format!("mplab type-growth · manifest {digest_preview}"),
    };
    write_output(
        &mut manifest,
        out_dir,
        "type_growth.svg",
        chart.render().as_bytes(),
    )
    .map_err(|e| failure(e.to_string()))?;
    let digest = manifest
        .write(out_dir, "plot_type_growth")
        .map_err(|e| failure(e.to_string()))?;
    println!("wrote type_growth.svg and per-schedule CSVs, manifest digest {digest}");
    Ok(EXIT_OK)
}

fn plot_risk(
    scan: &Path,
    schedule_arg: &Option<String>,
    out_dir: &Path,
    argv: Vec<String>,
) -> Result<i32, CmdError> {
    let rows = read_scan_csv(scan).map_err(|e| failure(e.to_string()))?;
    let lit = schedule_for_scan(schedule_arg, scan).map_err(|e| usage(e.to_string()))?;
    let schedule = parse_schedule(&lit)?;
    let table = ScalingTable {
        schedule: schedule.clone(),
        test_tokens: 0,
        rows,
    };
    let fit = fit_scaling_exponents(&table).ok();

    let mut manifest = RunManifest::new(argv);
    manifest.schedule = Some(schedule.literal());

    // Risk vs N, one series per T.
    let mut t_values: Vec<u64> = table.rows.iter().map(|r| r.t).collect();
    t_values.sort_unstable();
    t_values.dedup();
    let mut series = Vec::new();
    for (i, &t) in t_values.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.t == t && r.r_empirical > 0.0)
            .map(|r| (r.n as f64, r.r_empirical))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series {
            label: format!("T = {t}"),
            points: pts,
            color: PALETTE[i % PALETTE.len()].to_string(),
            dashed: false,
        });
    }
    if let Some(f) = &fit {
        let n_lo = table.rows.iter().map(|r| r.n).min().unwrap() as f64;
        let n_hi = table.rows.iter().map(|r| r.n).max().unwrap() as f64;
        series.push(Series {
            label: format!("(N0/N)^{:.3}", f.gamma_n),
            points: vec![
                (n_lo, (f.n0 / n_lo).powf(f.gamma_n)),
                (n_hi, (f.n0 / n_hi).powf(f.gamma_n)),
            ],
            color: "#444444".into(),
            dashed: true,
        });
    }
    let digest_preview = manifest.compute_content_digest();
    let chart_n = LogLogChart {
        title: "Cross entropy vs parameter budget".into(),
        x_label: "N".into(),
        y_label: "R_log (nats)".into(),
        series,
        footer: format!("mplab risk · manifest {digest_preview}"),
    };

    // Risk vs T, one series per N.
    let mut n_values: Vec<u64> = table.rows.iter().map(|r| r.n).collect();
    n_values.sort_unstable();
    n_values.dedup();
    let mut series_t = Vec::new();
    for (i, &n) in n_values.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.n == n && r.r_empirical > 0.0)
            .map(|r| (r.t as f64, r.r_empirical))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        series_t.push(Series {
            label: format!("N = {n}"),
            points: pts,
            color: PALETTE[i % PALETTE.len()].to_string(),
            dashed: false,
        });
    }
    if let Some(f) = &fit {
        let t_lo = t_values[0] as f64;
        let t_hi = *t_values.last().unwrap() as f64;
        series_t.push(Series {
            label: format!("(T0/T)^{:.3}", f.gamma_t),
            points: vec![
                (t_lo, (f.t0 / t_lo).powf(f.gamma_t)),
                (t_hi, (f.t0 / t_hi).powf(f.gamma_t)),
            ],
            color: "#444444".into(),
            dashed: true,
        });
    }
    let chart_t = LogLogChart {
        title: "Cross entropy vs training tokens".into(),
        x_label: "T".into(),
        y_label: "R_log (nats)".into(),
        series: series_t,
        footer: format!("mplab risk · manifest {digest_preview}"),
    };

    write_output(
        &mut manifest,
        out_dir,
        "risk_vs_n.svg",
        chart_n.render().as_bytes(),
    )
    .map_err(|e| failure(e.to_string()))?;
    write_output(
        &mut manifest,
        out_dir,
        "risk_vs_t.svg",
        chart_t.render().as_bytes(),
    )
    .map_err(|e| failure(e.to_string()))?;
    let digest = manifest
        .write(out_dir, "plot_risk")
        .map_err(|e| failure(e.to_string()))?;
    println!("wrote risk_vs_n.svg, risk_vs_t.svg, manifest digest {digest}");
    Ok(EXIT_OK)
}
