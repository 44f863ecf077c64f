//! Fidelity curves and their text format.
//!
//! ```text
//! # dimension=2
//! # L=10
//! # N=100
//! # kT=2.5
//! # J=1
//! # h=0
//! # M=10000
//! # seed=1
//! # policy=random-choice
//! # exact=false
//! # truncated=false
//! t	F	sigma_F
//! 0e0	1e0	5e-5
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a curve read
//! back is bit-identical to the one written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{Couplings, Dimension, ReadoutPolicy};

/// Identifies the simulation a curve came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveMeta {
    pub dimension: Dimension,
    pub side: usize,
    pub n: usize,
    pub kt: f64,
    pub couplings: Couplings,
    pub policy: ReadoutPolicy,
    pub seed: u64,
    /// Produced by exact enumeration rather than sampling.
    pub exact: bool,
    /// Some sample times were dropped because the step budget ran out.
    pub truncated: bool,
    /// Additional key=value pairs carried through unchanged.
    pub extra: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityCurve {
    pub meta: CurveMeta,
    /// Ensemble size; 0 for exact curves.
    pub ensemble_size: u64,
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FidelityCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.fidelity)
            .zip(&self.sigma)
            .map(|((&t, &f), &s)| (t, f, s))
    }

    /// Curve restricted to points with `t_min <= t <= t_max`.
    pub fn window(&self, t_min: f64, t_max: f64) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= t_min && self.times[i] <= t_max)
            .collect();
        Self {
            meta: self.meta.clone(),
            ensemble_size: self.ensemble_size,
            times: keep.iter().map(|&i| self.times[i]).collect(),
            fidelity: keep.iter().map(|&i| self.fidelity[i]).collect(),
            sigma: keep.iter().map(|&i| self.sigma[i]).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "# {k}={v}");
        };
        kv("dimension", m.dimension.to_string());
        kv("L", m.side.to_string());
        kv("N", m.n.to_string());
        kv("kT", format!("{}", m.kt));
        kv("J", format!("{}", m.couplings.j));
        kv("h", format!("{}", m.couplings.h));
        kv("M", self.ensemble_size.to_string());
        kv("seed", m.seed.to_string());
        kv("policy", m.policy.to_string());
        kv("exact", m.exact.to_string());
        kv("truncated", m.truncated.to_string());
        for (k, v) in &m.extra {
            kv(k, v.clone());
        }
        out.push_str("t\tF\tsigma_F\n");
        for (t, f, s) in self.points() {
            let _ = writeln!(out, "{t:e}\t{f:e}\t{s:e}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the curve format. `origin` is used only in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut times = Vec::new();
        let mut fidelity = Vec::new();
        let mut sigma = Vec::new();
        let mut seen_header = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if rest.is_empty() {
                    continue;
                }
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::parse(origin, lineno, "metadata line lacks `=`"))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            let cols: Vec<&str> = line
                .split(['\t', ',', ' '])
                .filter(|s| !s.is_empty())
                .collect();
            if !seen_header && cols.first() == Some(&"t") {
                seen_header = true;
                continue;
            }
            if cols.len() != 3 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 3 columns, found {}", cols.len()),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad number `{s}`")))
            };
            times.push(num(cols[0])?);
            fidelity.push(num(cols[1])?);
            sigma.push(num(cols[2])?);
        }

        let mut take = |key: &str| {
            meta.remove(key)
                .ok_or_else(|| Error::parse(origin, 0, format!("missing metadata `{key}`")))
        };
        let bad = |key: &str| Error::parse(origin, 0, format!("invalid metadata `{key}`"));

        let dimension = take("dimension")?
            .parse::<usize>()
            .ok()
            .and_then(|d| Dimension::from_usize(d).ok())
            .ok_or_else(|| bad("dimension"))?;
        let side = take("L")?.parse().map_err(|_| bad("L"))?;
        let n = take("N")?.parse().map_err(|_| bad("N"))?;
        let kt = take("kT")?.parse().map_err(|_| bad("kT"))?;
        let j = take("J")?.parse().map_err(|_| bad("J"))?;
        let h = take("h")?.parse().map_err(|_| bad("h"))?;
        let ensemble_size = take("M")?.parse().map_err(|_| bad("M"))?;
        let seed = take("seed")?.parse().map_err(|_| bad("seed"))?;
        let policy = take("policy")?.parse().map_err(|_| bad("policy"))?;
        let exact = take("exact")
            .unwrap_or_else(|_| "false".into())
            .parse()
            .map_err(|_| bad("exact"))?;
        let truncated = take("truncated")
            .unwrap_or_else(|_| "false".into())
            .parse()
            .map_err(|_| bad("truncated"))?;

        Ok(Self {
            meta: CurveMeta {
                dimension,
                side,
                n,
                kt,
                couplings: Couplings::new(j, h),
                policy,
                seed,
                exact,
                truncated,
                extra: meta,
            },
            ensemble_size,
            times,
            fidelity,
            sigma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> CurveMeta {
        CurveMeta {
            dimension: Dimension::Two,
            side: 10,
            n: 100,
            kt: 2.5,
            couplings: Couplings::default(),
            policy: ReadoutPolicy::RandomChoice,
            seed: 17,
            exact: false,
            truncated: false,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn text_layout() {
        let c = FidelityCurve {
            meta: meta(),
            ensemble_size: 10_000,
            times: vec![0.0, 0.5],
            fidelity: vec![1.0, 0.75],
            sigma: vec![5e-5, 0.0043],
        };
        let text = c.to_text();
        assert!(text.starts_with("# dimension=2\n# L=10\n# N=100\n# kT=2.5\n"));
        assert!(text.contains("# M=10000\n"));
        assert!(text.contains("# policy=random-choice\n"));
        assert!(text.contains("t\tF\tsigma_F\n0e0\t1e0\t5e-5\n5e-1\t7.5e-1\t4.3e-3\n"));
    }

    #[test]
    fn parse_errors_report_line() {
        let text = "# dimension=1\nt\tF\tsigma_F\n0\t1\n";
        match FidelityCurve::parse(text, Path::new("x.dat")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "# dimension=1\n0\t1\tfoo\n";
        assert!(matches!(
            FidelityCurve::parse(text, Path::new("x.dat")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(FidelityCurve::parse("0 1 1\n", Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            pts in proptest::collection::vec((0.0f64..1e6, 0.0f64..=1.0, 1e-9f64..1.0), 0..40),
            seed in any::<u64>(),
            kt in 0.01f64..50.0,
        ) {
            let mut m = meta();
            m.seed = seed;
            m.kt = kt;
            m.extra.insert("note".into(), "x y".into());
            let c = FidelityCurve {
                meta: m,
                ensemble_size: 123,
                times: pts.iter().map(|p| p.0).collect(),
                fidelity: pts.iter().map(|p| p.1).collect(),
                sigma: pts.iter().map(|p| p.2).collect(),
            };
            let back = FidelityCurve::parse(&c.to_text(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
