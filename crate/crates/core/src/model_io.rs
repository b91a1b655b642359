//! Versioned text format for fitted models.
//!
//! ```text
//! omix-model v1
//! family mst
//! K 2
//! M 3
//! weights 0.4 0.6
//! component 0
//! mu ...
//! D ...        (MST: row-major, columns are the axes)
//! A ...
//! nu ...
//! component 1
//! ...
//! ```
//!
//! Gaussian components carry `mu` and `sigma` (row-major). Floats are written
//! in shortest round-trip form, so loading a saved model gives back the same
//! bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mixture::{Components, Family, GaussianComponent, MixtureModel, MstComponent};

pub const HEADER: &str = "omix-model";
pub const VERSION: u32 = 1;

fn push_line(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        let _ = write!(s, " {v:?}");
    }
    s.push('\n');
}

pub fn serialize(model: &MixtureModel) -> String {
    let mut s = format!("{HEADER} v{VERSION}\n");
    let _ = writeln!(s, "family {}", model.family());
    let _ = writeln!(s, "K {}", model.k());
    let _ = writeln!(s, "M {}", model.dim());
    push_line(&mut s, "weights", model.weights());
    match model.components() {
        Components::Gaussian(cs) => {
            for (k, c) in cs.iter().enumerate() {
                let _ = writeln!(s, "component {k}");
                push_line(&mut s, "mu", c.mu());
                push_line(&mut s, "sigma", c.sigma());
            }
        }
        Components::Mst(cs) => {
            for (k, c) in cs.iter().enumerate() {
                let _ = writeln!(s, "component {k}");
                push_line(&mut s, "mu", c.mu());
                push_line(&mut s, "D", &c.d_row_major());
                push_line(&mut s, "A", c.a());
                push_line(&mut s, "nu", c.nu());
            }
        }
    }
    s
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str, &'a str)> {
        for (i, line) in self.iter.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
            return Ok((i + 1, key, rest.trim()));
        }
        Err(Error::Format("model file ends early".into()))
    }

    fn expect(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line, k, rest) = self.next()?;
        if k != key {
            return Err(Error::Format(format!("line {line}: expected '{key}', found '{k}'")));
        }
        Ok((line, rest))
    }

    fn floats(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let (line, rest) = self.expect(key)?;
        let v = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("line {line}: bad number in '{key}'")))?;
        if v.len() != count {
            return Err(Error::Format(format!("line {line}: '{key}' needs {count} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn integer(&mut self, key: &str) -> Result<usize> {
        let (line, rest) = self.expect(key)?;
        rest.parse().map_err(|_| Error::Format(format!("line {line}: bad integer for '{key}'")))
    }
}

pub fn deserialize(text: &str) -> Result<MixtureModel> {
    let mut lines = Lines { iter: text.lines().enumerate() };
    let (_, version) = lines.expect(HEADER).map_err(|_| Error::Format("not an omix model file".into()))?;
    if version != format!("v{VERSION}") {
        return Err(Error::Format(format!("unsupported model version '{version}'")));
    }
    let (_, fam) = lines.expect("family")?;
    let family: Family = fam.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
    let k = lines.integer("K")?;
    let m = lines.integer("M")?;
    if k == 0 || m == 0 {
        return Err(Error::Format("K and M must be positive".into()));
    }
    let weights = lines.floats("weights", k)?;
    let to_format = |e: Error| match e {
        Error::Format(_) => e,
        other => Error::Format(other.to_string()),
    };
    let components = match family {
        Family::Gaussian => {
            let mut cs = Vec::with_capacity(k);
            for i in 0..k {
                component_header(&mut lines, i)?;
                let mu = lines.floats("mu", m)?;
                let sigma = lines.floats("sigma", m * m)?;
                cs.push(GaussianComponent::new(mu, sigma).map_err(to_format)?);
            }
            Components::Gaussian(cs)
        }
        Family::Mst => {
            let mut cs = Vec::with_capacity(k);
            for i in 0..k {
                component_header(&mut lines, i)?;
                let mu = lines.floats("mu", m)?;
                let d = lines.floats("D", m * m)?;
                let a = lines.floats("A", m)?;
                let nu = lines.floats("nu", m)?;
                cs.push(MstComponent::new(mu, d, a, nu).map_err(to_format)?);
            }
            Components::Mst(cs)
        }
    };
    if let Ok((line, key, _)) = lines.next() {
        return Err(Error::Format(format!("line {line}: unexpected '{key}' after the last component")));
    }
    MixtureModel::new(weights, components).map_err(to_format)
}

fn component_header(lines: &mut Lines<'_>, i: usize) -> Result<()> {
    let (line, rest) = lines.expect("component")?;
    if rest != i.to_string() {
        return Err(Error::Format(format!("line {line}: expected component {i}")));
    }
    Ok(())
}

pub fn save(model: &MixtureModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MixtureModel> {
    deserialize(&fs::read_to_string(path)?)
}
