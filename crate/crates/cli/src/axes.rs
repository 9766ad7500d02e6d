//! Command-line slice (`beta=0`) and range (`-2:20` or `-2:20:89`) arguments.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};

/// Samples taken when a range omits its count.
pub const DEFAULT_SAMPLES: usize = 221;
pub const MAX_SAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    B,
    Alpha,
    Beta,
}

impl FromStr for Var {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Var> {
        match s.trim() {
            "b" => Ok(Var::B),
            "alpha" => Ok(Var::Alpha),
            "beta" => Ok(Var::Beta),
            other => bail!("unknown variable '{other}' (expected b, alpha or beta)"),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Var::B => "b",
            Var::Alpha => "alpha",
            Var::Beta => "beta",
        })
    }
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| anyhow!("'{}' is not a number", s.trim()))?;
    if !v.is_finite() {
        bail!("'{}' is not finite", s.trim());
    }
    Ok(v)
}

/// `var=value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub var: Var,
    pub value: f64,
}

impl FromStr for Slice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Slice> {
        let (var, value) = s.split_once('=').ok_or_else(|| anyhow!("slice must look like 'beta=0', got '{s}'"))?;
        Ok(Slice { var: var.parse()?, value: number(value)? })
    }
}

/// `lo:hi` or `lo:hi:count`, sampled at `count` equispaced points including both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl FromStr for Range {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Range> {
        let parts: Vec<&str> = s.split(':').collect();
        let (lo, hi, count) = match parts.as_slice() {
            [lo, hi] => (number(lo)?, number(hi)?, DEFAULT_SAMPLES),
            [lo, hi, n] => {
                let n: usize = n.trim().parse().map_err(|_| anyhow!("bad sample count '{}'", n.trim()))?;
                (number(lo)?, number(hi)?, n)
            }
            _ => bail!("range must look like 'lo:hi' or 'lo:hi:count', got '{s}'"),
        };
        if !(lo < hi) {
            bail!("range needs lo < hi (got {lo}:{hi})");
        }
        if !(2..=MAX_SAMPLES).contains(&count) {
            bail!("sample count must be in 2..={MAX_SAMPLES} (got {count})");
        }
        Ok(Range { lo, hi, count })
    }
}

impl Range {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let last = (self.count - 1) as f64;
        (0..self.count).map(move |i| {
            let t = i as f64 / last;
            if i + 1 == self.count { self.hi } else { self.lo * (1.0 - t) + self.hi * t }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slices() {
        assert_eq!("beta=0".parse::<Slice>().unwrap(), Slice { var: Var::Beta, value: 0.0 });
        assert_eq!(" alpha = -1.5 ".parse::<Slice>().unwrap(), Slice { var: Var::Alpha, value: -1.5 });
        for bad in ["beta", "gamma=1", "b=x", "b=inf", "=1", "b==1"] {
            assert!(bad.parse::<Slice>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ranges() {
        let r: Range = "-2:20".parse().unwrap();
        assert_eq!((r.lo, r.hi, r.count), (-2.0, 20.0, DEFAULT_SAMPLES));
        let v: Vec<f64> = "0:1:5".parse::<Range>().unwrap().values().collect();
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for bad in ["1:0", "1:1", "0:1:1", "0:1:x", "0", "0:1:2:3", "a:b", "0:nan"] {
            assert!(bad.parse::<Range>().is_err(), "{bad}");
        }
        // the step overflows even though both ends are finite
        let wide: Vec<f64> = "-1e308:1e308:3".parse::<Range>().unwrap().values().collect();
        assert_eq!(wide, vec![-1e308, 0.0, 1e308]);
    }

    proptest! {
        #[test]
        fn range_endpoints_are_exact(lo in -1e6f64..1e6, w in 1e-6f64..1e6, n in 2usize..500) {
            let r = Range { lo, hi: lo + w, count: n };
            let v: Vec<f64> = r.values().collect();
            prop_assert_eq!(v.len(), n);
            prop_assert_eq!(v[0], lo);
            prop_assert_eq!(v[n - 1], lo + w);
            prop_assert!(v.windows(2).all(|p| p[1] >= p[0]));
        }

        #[test]
        fn parsers_never_panic(s in ".{0,40}") {
            let _ = s.parse::<Range>();
            let _ = s.parse::<Slice>();
        }
    }
}
