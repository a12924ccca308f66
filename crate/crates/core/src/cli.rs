//! Command-line surface over the library.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curtain::{
    assemble_components, build_curtain, coupling, sample_y, CouplingInterval, CurtainConfig, CurtainError,
    CurtainInterval, CurtainTable, LiftedCoupling,
};
use crate::decompose::{decompose, DecomposeError, IrreducibleComponent};
use crate::measures::{check_convex_order, ConvexOrder, DiscreteMeasure, JointMeasure, MeasureSpec};
use crate::shadow::shadow;
use crate::verify::{verify_coupling, VerificationReport};

#[derive(Debug, Parser)]
#[command(name = "leftcurtain", version, about = "Left-curtain martingale couplings of atomic measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shadow of --mu in --nu.
    Shadow {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Curtain table and lifted coupling.
    Curtain {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Per-interval curve table as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Build per irreducible component and report the split.
        #[arg(long)]
        components: bool,
    },
    /// Check a coupling file against its marginals.
    Verify {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        coupling: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Draw `(u, v, x, y)` rows from the coupling with a seeded ChaCha8 stream.
    Sample {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// List the irreducible components.
    Decompose {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("inputs are not in convex order: {0}")]
    NotOrdered(String),
    #[error("verification failed")]
    VerificationFailed(Box<VerificationReport>),
    #[error("{0}")]
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => 2,
            CliError::NotOrdered(_) => 3,
            CliError::VerificationFailed(_) => 4,
            CliError::Computation(_) => 5,
        }
    }
}

impl From<CurtainError> for CliError {
    fn from(e: CurtainError) -> Self {
        match e {
            CurtainError::NotOrdered(v) => CliError::NotOrdered(format!("{v:?}")),
            other => CliError::Computation(other.to_string()),
        }
    }
}

impl From<DecomposeError> for CliError {
    fn from(e: DecomposeError) -> Self {
        match e {
            DecomposeError::NotOrdered(v) => CliError::NotOrdered(format!("{v:?}")),
            other => CliError::Computation(other.to_string()),
        }
    }
}

fn is_std(p: &Path) -> bool {
    p.as_os_str() == "-"
}

fn read_text(p: &Path) -> Result<String, CliError> {
    let io_err = |source| CliError::Io { path: p.display().to_string(), source };
    if is_std(p) {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(io_err)?;
        Ok(s)
    } else {
        fs::read_to_string(p).map_err(io_err)
    }
}

fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    let io_err = |source| CliError::Io { path: p.display().to_string(), source };
    if is_std(p) {
        io::stdout().write_all(text.as_bytes()).map_err(io_err)
    } else {
        fs::write(p, text).map_err(io_err)
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(p: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse { path: p.display().to_string(), msg: e.to_string() })
}

pub fn read_measure(p: &Path) -> Result<DiscreteMeasure, CliError> {
    let spec: MeasureSpec = parse_json(p, &read_text(p)?)?;
    spec.to_measure()
        .map_err(|e| CliError::Parse { path: p.display().to_string(), msg: e.to_string() })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_pair(mu: &Path, nu: &Path) -> Result<(DiscreteMeasure, DiscreteMeasure), CliError> {
    let (a, b) = (read_measure(mu)?, read_measure(nu)?);
    if let ConvexOrder::Fails(v) = check_convex_order(&a, &b, crate::curtain::ORDER_TOL) {
        return Err(CliError::NotOrdered(format!("{v:?}")));
    }
    Ok((a, b))
}

/// One interval in the coupling file; `q`, `phi`, `dphi` allow rebuilding the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub u_lo: f64,
    pub u_hi: f64,
    pub x: f64,
    pub r: f64,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dphi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingFile {
    #[serde(default)]
    pub components: Vec<serde_json::Value>,
    pub intervals: Vec<IntervalRecord>,
    pub joint: Vec<[f64; 3]>,
}

impl CouplingFile {
    pub fn from_table(table: &CurtainTable, components: &[IrreducibleComponent]) -> Self {
        let pi = coupling(table);
        Self {
            components: components.iter().map(|c| serde_json::to_value(c).expect("serializable")).collect(),
            intervals: table
                .intervals
                .iter()
                .map(|iv| IntervalRecord {
                    u_lo: iv.u_lo,
                    u_hi: iv.u_hi,
                    x: iv.g,
                    r: iv.r,
                    s: iv.s,
                    q: Some(iv.q),
                    phi: Some(iv.phi),
                    dphi: Some(iv.dphi),
                })
                .collect(),
            joint: pi.joint.atoms().iter().map(|&(x, y, w)| [x, y, w]).collect(),
        }
    }

    pub fn coupling(&self) -> LiftedCoupling {
        LiftedCoupling {
            intervals: self
                .intervals
                .iter()
                .map(|r| CouplingInterval { u_lo: r.u_lo, u_hi: r.u_hi, x: r.x, r: r.r, s: r.s })
                .collect(),
            joint: JointMeasure::new(self.joint.iter().map(|a| (a[0], a[1], a[2])).collect()),
        }
    }

    /// The full table, when every interval carries its slope data.
    pub fn table(&self) -> Option<CurtainTable> {
        let intervals = self
            .intervals
            .iter()
            .map(|r| {
                Some(CurtainInterval {
                    u_lo: r.u_lo,
                    u_hi: r.u_hi,
                    g: r.x,
                    r: r.r,
                    q: r.q?,
                    s: r.s,
                    phi: r.phi?,
                    dphi: r.dphi?,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        let mass = intervals.last().map_or(0.0, |iv: &CurtainInterval| iv.u_hi);
        Some(CurtainTable { intervals, mass })
    }
}

/// Curve CSV with one row per interval endpoint.
pub fn curves_csv(table: &CurtainTable) -> String {
    let mut s = String::from("u,G,R,Q,S,phi\n");
    for iv in &table.intervals {
        for (u, phi) in [(iv.u_lo, iv.phi), (iv.u_hi, iv.phi_end())] {
            s.push_str(&format!("{u},{},{},{},{},{phi}\n", iv.g, iv.r, iv.q, iv.s));
        }
    }
    s
}

fn measure_json(m: &DiscreteMeasure) -> serde_json::Value {
    serde_json::to_value(MeasureSpec::from_measure(m)).expect("serializable")
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Shadow { mu, nu, out } => {
            let (a, b) = (read_measure(&mu)?, read_measure(&nu)?);
            let s = shadow(&a, &b).map_err(|e| match e {
                crate::shadow::ShadowError::Geometry(g) => CliError::Computation(g.to_string()),
                other => CliError::NotOrdered(other.to_string()),
            })?;
            write_text(&out, &to_json(&MeasureSpec::from_measure(&s)))
        }
        Command::Curtain { mu, nu, out, curves, components } => {
            let (a, b) = read_pair(&mu, &nu)?;
            let (table, comps) = if components {
                let dec = decompose(&a, &b)?;
                (assemble_components(&a, &dec, &CurtainConfig::default())?, dec.components)
            } else {
                (build_curtain(&a, &b)?, Vec::new())
            };
            if let Some(path) = curves {
                write_text(&path, &curves_csv(&table))?;
            }
            write_text(&out, &to_json(&CouplingFile::from_table(&table, &comps)))
        }
        Command::Verify { mu, nu, coupling: path, tol } => {
            let (a, b) = (read_measure(&mu)?, read_measure(&nu)?);
            let file: CouplingFile = parse_json(&path, &read_text(&path)?)?;
            let mut report = verify_coupling(&file.coupling(), &a, &b, tol);
            if let Some(table) = file.table() {
                report = report.with_table_checks(&table, &a, &b, tol);
            }
            write_text(Path::new("-"), &to_json(&report))?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::VerificationFailed(Box::new(report)))
            }
        }
        Command::Sample { mu, nu, n, seed, out } => {
            let (a, b) = read_pair(&mu, &nu)?;
            let table = build_curtain(&a, &b)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = String::from("u,v,x,y\n");
            for _ in 0..n {
                // levels in (0, 1]
                let u = (1.0 - rng.gen::<f64>()) * table.mass;
                let v = 1.0 - rng.gen::<f64>();
                let x = table.locate(u).map_or(f64::NAN, |iv| iv.g);
                s.push_str(&format!("{u},{v},{x},{}\n", sample_y(&table, u, v)));
            }
            write_text(&out, &s)
        }
        Command::Decompose { mu, nu } => {
            let (a, b) = read_pair(&mu, &nu)?;
            let dec = decompose(&a, &b)?;
            let listing = serde_json::json!({
                "components": dec.components.iter().map(|c| serde_json::json!({
                    "lo": c.lo,
                    "hi": c.hi,
                    "mass": c.mass,
                    "mean": c.mean,
                    "nu_at_lo": c.nu_at_lo,
                    "nu_at_hi": c.nu_at_hi,
                    "mu": measure_json(&c.mu_part),
                    "nu": measure_json(&c.nu_part),
                })).collect::<Vec<_>>(),
                "static": measure_json(&dec.static_part),
            });
            write_text(Path::new("-"), &to_json(&listing))
        }
    }
}
