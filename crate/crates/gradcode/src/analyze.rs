//! `gradcode analyze`: closed-form quantities over a `(method, c, delta)` grid.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use gradcode_core::analysis::{
    expected_time_to_eps, moments_exact, noise_floor, per_iteration_time_bound, Method, ProblemConstants,
};
use gradcode_core::simulator::agc_threshold;
use gradcode_core::straggler::{
    expected_runtime_agc, expected_runtime_egc, expected_runtime_egc_exact, expected_runtime_uncoded,
};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Tasks.
    #[arg(long)]
    pub n: u64,
    /// Workers; defaults to n.
    #[arg(long)]
    pub k: Option<u64>,
    /// Comma-separated tasks-per-worker values.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub c: Vec<u64>,
    /// Comma-separated non-straggler fractions for agc rows.
    #[arg(long, value_delimiter = ',', conflicts_with = "r")]
    pub delta: Vec<f64>,
    /// Comma-separated non-straggler counts for agc rows (alternative to --delta).
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<u64>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "uncoded,egc,agc")]
    pub methods: Vec<String>,
    /// Straggling parameter; defaults to 1/c on each row.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Initial gap `f(x0) - f*`.
    #[arg(long, default_value_t = 1.0)]
    pub delta0: f64,
    /// Target accuracy for the time-to-accuracy column.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: Method,
    pub c: u64,
    pub delta: f64,
    pub r: u64,
    pub p: f64,
    pub q: f64,
    pub eps0: Option<f64>,
    pub lambda: f64,
    /// Expected round time from the delay model (`n = k` only).
    pub iter_time: Option<f64>,
    /// Exact-code mean from the max-of-min form.
    pub iter_time_exact: Option<f64>,
    /// Round-time bound with `lambda = 1/c`.
    pub iter_bound: Option<f64>,
    pub time_to_eps: Option<f64>,
    pub flag: &'static str,
}

pub fn rows(args: &AnalyzeArgs) -> Result<Vec<Row>> {
    let n = args.n;
    let k = args.k.unwrap_or(n);
    let constants = ProblemConstants::new(args.mu, args.beta, args.sigma)?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<gradcode_core::Result<Vec<_>>>()?;
    if args.c.is_empty() {
        return Err(Error::Usage("--c needs at least one value".into()));
    }
    let mut fractions: Vec<(f64, u64)> = if args.r.is_empty() {
        let d = if args.delta.is_empty() {
            vec![0.5]
        } else {
            args.delta.clone()
        };
        d.into_iter()
            .map(|d| (d, agc_threshold(d, k as usize) as u64))
            .collect()
    } else {
        args.r.iter().map(|&r| (r as f64 / k as f64, r)).collect()
    };
    if let Some(&(d, _)) = fractions.iter().find(|(d, _)| !(*d > 0.0 && *d <= 1.0)) {
        return Err(Error::Usage(format!("delta must lie in (0, 1], got {d}")));
    }
    fractions.dedup();

    let square = n == k;
    let mut out = Vec::new();
    for &method in &methods {
        for &c in &args.c {
            if c == 0 || n % c != 0 || (k * c) % n != 0 {
                return Err(Error::Usage(format!("c = {c} needs c | n and n | kc (n={n}, k={k})")));
            }
            if method == Method::Uncoded && c != 1 {
                continue;
            }
            let lambda = args.lambda.unwrap_or(1.0 / c as f64);
            let ell = k * c / n;
            let exact_row = |iter_time: Option<f64>, iter_time_exact: Option<f64>| -> Result<Row> {
                let bound = per_iteration_time_bound(method, n, c, 1.0)?;
                let time = match args.eps {
                    Some(eps) => Some(expected_time_to_eps(method, &constants, n, c, 1.0, args.delta0, eps)?),
                    None => None,
                };
                Ok(Row {
                    method,
                    c,
                    delta: 1.0,
                    r: k,
                    p: 0.0,
                    q: 0.0,
                    eps0: None,
                    lambda,
                    iter_time,
                    iter_time_exact,
                    iter_bound: Some(bound),
                    time_to_eps: time,
                    flag: "",
                })
            };
            match method {
                Method::Uncoded => out.push(exact_row(square.then(|| expected_runtime_uncoded(n, lambda)), None)?),
                Method::Egc => out.push(exact_row(
                    if square {
                        Some(expected_runtime_egc(n, c, lambda)?)
                    } else {
                        None
                    },
                    if square {
                        Some(expected_runtime_egc_exact(n, c, lambda)?)
                    } else {
                        None
                    },
                )?),
                Method::Agc => {
                    for &(delta, r) in &fractions {
                        let m = moments_exact(k, ell, r)?;
                        let eps0 = noise_floor(&constants, n, c, r);
                        let iter_bound = (delta < 1.0)
                            .then(|| per_iteration_time_bound(method, n, c, delta))
                            .transpose()?;
                        let (time, flag) = match args.eps {
                            Some(eps) if eps < eps0 => (None, "below_noise_floor"),
                            Some(eps) if delta < 1.0 => (
                                Some(expected_time_to_eps(method, &constants, n, c, delta, args.delta0, eps)?),
                                "",
                            ),
                            _ => (None, ""),
                        };
                        out.push(Row {
                            method,
                            c,
                            delta,
                            r,
                            p: m.p,
                            q: m.q,
                            eps0: Some(eps0),
                            lambda,
                            iter_time: if square {
                                Some(expected_runtime_agc(n, c, r, lambda)?)
                            } else {
                                None
                            },
                            iter_time_exact: None,
                            iter_bound,
                            time_to_eps: time,
                            flag,
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.method
            .name()
            .cmp(b.method.name())
            .then(a.c.cmp(&b.c))
            .then(a.delta.total_cmp(&b.delta))
    });
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(args: &AnalyzeArgs, rows: &[Row]) -> String {
    let snapshot = format!("{args:?}");
    let hash: String = Sha256::digest(snapshot.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut s = format!(
        "# config_hash: {hash}\nmethod,n,k,c,delta,r,p,q,eps0,lambda,iter_time,iter_time_exact,iter_bound,time_to_eps,flag\n"
    );
    let k = args.k.unwrap_or(args.n);
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method.name(),
            args.n,
            k,
            r.c,
            r.delta,
            r.r,
            r.p,
            r.q,
            opt(r.eps0),
            r.lambda,
            opt(r.iter_time),
            opt(r.iter_time_exact),
            opt(r.iter_bound),
            opt(r.time_to_eps),
            r.flag
        );
    }
    s
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let csv = to_csv(args, &rows(args)?);
    match &args.out {
        Some(path) => crate::output::write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
