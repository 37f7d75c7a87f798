//! Plain-text policy checkpoints.
//!
//! ```text
//! smaspl-policy v1
//! sizes 8 10 10 10 24
//! sigma_floor 1.0000000000000000e-2
//! lo <D values>
//! hi <D values>
//! sigma_scale <D values>
//! input_scale <S values>
//! mean_params <P values>
//! cov_params <P values>
//! ```
//!
//! Floats are written with 17 significant digits, which reads back to the
//! same bits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use smaspl_core::net::FeedforwardNet;
use smaspl_core::policy::{GaussianPolicy, PolicyError, PolicyScaling};
use thiserror::Error;

pub const FORMAT_TAG: &str = "smaspl-policy v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Layout(#[from] PolicyError),
}

fn floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v:.16e}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn to_text(policy: &GaussianPolicy) -> String {
    let s = policy.scaling();
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    out.push_str("sizes");
    for n in policy.mean_net().sizes() {
        write!(out, " {n}").expect("writing to a String");
    }
    out.push('\n');
    floats(&mut out, "sigma_floor", &[s.sigma_floor]);
    floats(&mut out, "lo", &s.lo);
    floats(&mut out, "hi", &s.hi);
    floats(&mut out, "sigma_scale", &s.sigma_scale);
    floats(&mut out, "input_scale", &s.input_scale);
    floats(&mut out, "mean_params", policy.mean_net().params());
    floats(&mut out, "cov_params", policy.cov_net().params());
    out
}

pub fn from_text(text: &str) -> Result<GaussianPolicy, CheckpointError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let err = |line, detail: String| CheckpointError::Parse { line, detail };
    match lines.next() {
        Some((_, FORMAT_TAG)) => {}
        Some((line, other)) => return Err(err(line, format!("expected {FORMAT_TAG:?}, found {other:?}"))),
        None => return Err(err(1, "empty checkpoint".into())),
    }
    let mut field = |key: &str| -> Result<(usize, Vec<&str>), CheckpointError> {
        let (line, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}`")))?;
        let mut parts = l.split_ascii_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((line, parts.collect())),
            other => Err(err(line, format!("expected `{key}`, found {other:?}"))),
        }
    };
    let parse_f = |(line, parts): (usize, Vec<&str>)| -> Result<Vec<f64>, CheckpointError> {
        parts.iter().map(|p| p.parse::<f64>().map_err(|_| err(line, format!("bad number {p:?}")))).collect()
    };
    let (line, parts) = field("sizes")?;
    let sizes: Vec<usize> =
        parts.iter().map(|p| p.parse().map_err(|_| err(line, format!("bad layer width {p:?}")))).collect::<Result<_, _>>()?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(err(line, "need at least two positive layer widths".into()));
    }
    let (fline, fparts) = field("sigma_floor")?;
    let [sigma_floor] = parse_f((fline, fparts))?[..] else {
        return Err(err(fline, "sigma_floor takes one value".into()));
    };
    let lo = parse_f(field("lo")?)?;
    let hi = parse_f(field("hi")?)?;
    let sigma_scale = parse_f(field("sigma_scale")?)?;
    let input_scale = parse_f(field("input_scale")?)?;
    let (mline, mparts) = field("mean_params")?;
    let mean = parse_f((mline, mparts))?;
    let (cline, cparts) = field("cov_params")?;
    let cov = parse_f((cline, cparts))?;
    let mean_net = FeedforwardNet::with_params(sizes.clone(), mean)
        .ok_or_else(|| err(mline, "parameter count does not match the layer widths".into()))?;
    let cov_net = FeedforwardNet::with_params(sizes, cov)
        .ok_or_else(|| err(cline, "parameter count does not match the layer widths".into()))?;
    let scaling = PolicyScaling { lo, hi, sigma_scale, sigma_floor, input_scale };
    Ok(GaussianPolicy::from_parts(mean_net, cov_net, scaling)?)
}

pub fn checkpoint_path(dir: &Path, agent: usize) -> PathBuf {
    dir.join(format!("policy-{agent}.txt"))
}

pub fn save(policy: &GaussianPolicy, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_text(policy)).map_err(|source| CheckpointError::Io { path: path.into(), source })
}

pub fn load(path: &Path) -> Result<GaussianPolicy, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.into(), source })?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GaussianPolicy {
        let scaling = PolicyScaling {
            lo: vec![-1.0; 6],
            hi: vec![2.0; 6],
            sigma_scale: vec![0.75; 6],
            sigma_floor: 0.01,
            input_scale: vec![1.0, 0.1],
        };
        let mut p = GaussianPolicy::with_scaling(1, &[3], scaling);
        let theta: Vec<f64> = (0..p.param_count()).map(|i| (i as f64 * 0.7).sin() / 3.0).collect();
        p.set_params(&theta).unwrap();
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = tiny();
        let back = from_text(&to_text(&p)).unwrap();
        assert_eq!(back, p);
        assert!(back.params().iter().zip(p.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_other_versions() {
        let text = to_text(&tiny()).replace("v1", "v9");
        assert!(matches!(from_text(&text), Err(CheckpointError::Parse { line: 1, .. })));
    }
}
