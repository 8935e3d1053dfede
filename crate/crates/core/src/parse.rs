//! Small text grammars used on the command line and in config files.
//!
//! ```text
//! real      := float | [float ['*']] 'pi' ['/' float] | float '^' float
//! shape     := 'drop:' kv* | 'disk:' kv* | 'ellipse:' kv*
//! fem-geom  := 'disk-in-disk:' kv* | 'ellipse-in-disk:' kv* | 'drop-in-disk:' kv*
//! kv        := key '=' real (',' key '=' real)*
//! sweep     := name '=' real ':' real ':' count
//! eps-range := real ':' real        (both powers of two: every power in between)
//!            | real (',' real)*
//! n-list    := count (',' count)*
//! mode      := 'free' | 'disk:R=' real
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bem::KernelMode;
use crate::error::{Error, Result};
use crate::fem::FemGeometry;
use crate::geometry::{build_corner_domain, build_smooth_domain, BoundaryCurve, SmoothShape};

fn bad(input: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter(format!("`{input}`: {}", reason.into()))
}

fn plain_float(s: &str, whole: &str) -> Result<f64> {
    let t = s.trim();
    // Rust's float parser accepts "inf" and "nan"; neither is a usable parameter.
    let v: f64 = t.parse().map_err(|_| bad(whole, format!("`{t}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(whole, "value must be finite"));
    }
    Ok(v)
}

/// Parses a real number, accepting multiples and fractions of `pi` and
/// powers `b^e`.
pub fn parse_real(input: &str) -> Result<f64> {
    let s = input.trim();
    if s.is_empty() {
        return Err(bad(input, "empty value"));
    }
    if let Some(idx) = s.find("pi") {
        let (head, tail) = (&s[..idx], &s[idx + 2..]);
        let head = head.trim().trim_end_matches('*').trim();
        let coef = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => plain_float(h, input)?,
        };
        let tail = tail.trim();
        let denom = if tail.is_empty() {
            1.0
        } else if let Some(d) = tail.strip_prefix('/') {
            plain_float(d, input)?
        } else {
            return Err(bad(input, "expected `/` after pi"));
        };
        if denom == 0.0 {
            return Err(bad(input, "division by zero"));
        }
        return Ok(coef * PI / denom);
    }
    if let Some((b, e)) = s.split_once('^') {
        let v = plain_float(b, input)?.powf(plain_float(e, input)?);
        if !v.is_finite() {
            return Err(bad(input, "power overflows"));
        }
        return Ok(v);
    }
    plain_float(s, input)
}

fn parse_count(s: &str, whole: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| bad(whole, format!("`{}` is not a non-negative integer", s.trim())))
}

/// `key=value` pairs after the `kind:` prefix.
fn key_values<'a>(body: &'a str, whole: &str) -> Result<Vec<(&'a str, f64)>> {
    let mut out: Vec<(&str, f64)> = Vec::new();
    if body.trim().is_empty() {
        return Ok(out);
    }
    for part in body.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| bad(whole, format!("`{part}` is not key=value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(bad(whole, "empty key"));
        }
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(bad(whole, format!("key `{k}` given twice")));
        }
        out.push((k, parse_real(v)?));
    }
    Ok(out)
}

struct Fields<'a> {
    whole: &'a str,
    kv: Vec<(&'a str, f64)>,
}

impl<'a> Fields<'a> {
    fn new(body: &'a str, whole: &'a str, allowed: &[&str]) -> Result<Self> {
        let kv = key_values(body, whole)?;
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(bad(whole, format!("unknown key `{k}` (expected one of {})", allowed.join(", "))));
        }
        Ok(Fields { whole, kv })
    }

    fn get(&self, key: &str, default: Option<f64>) -> Result<f64> {
        self.kv
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .or(default)
            .ok_or_else(|| bad(self.whole, format!("missing key `{key}`")))
    }
}

/// A boundary curve by name and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeSpec {
    Drop { alpha: f64, r0: f64 },
    Disk { r: f64 },
    Ellipse { a: f64, b: f64 },
}

impl ShapeSpec {
    pub fn build(&self) -> Result<BoundaryCurve> {
        match *self {
            ShapeSpec::Drop { alpha, r0 } => build_corner_domain(alpha, r0),
            ShapeSpec::Disk { r } => build_smooth_domain(SmoothShape::Disk { r }),
            ShapeSpec::Ellipse { a, b } => build_smooth_domain(SmoothShape::Ellipse { a, b }),
        }
    }

    pub fn descriptor(&self) -> String {
        match *self {
            ShapeSpec::Drop { alpha, r0 } => format!("drop:alpha={alpha},R0={r0}"),
            ShapeSpec::Disk { r } => format!("disk:r={r}"),
            ShapeSpec::Ellipse { a, b } => format!("ellipse:a={a},b={b}"),
        }
    }
}

/// `drop:alpha=pi/2,R0=0.8`, `disk:r=1`, `ellipse:a=2,b=1`.
pub fn parse_shape(input: &str) -> Result<ShapeSpec> {
    let (kind, body) = input.trim().split_once(':').unwrap_or((input.trim(), ""));
    match kind {
        "drop" => {
            let f = Fields::new(body, input, &["alpha", "R0"])?;
            Ok(ShapeSpec::Drop { alpha: f.get("alpha", None)?, r0: f.get("R0", Some(0.8))? })
        }
        "disk" => {
            let f = Fields::new(body, input, &["r"])?;
            Ok(ShapeSpec::Disk { r: f.get("r", Some(1.0))? })
        }
        "ellipse" => {
            let f = Fields::new(body, input, &["a", "b"])?;
            Ok(ShapeSpec::Ellipse { a: f.get("a", None)?, b: f.get("b", None)? })
        }
        other => Err(bad(input, format!("unknown shape `{other}` (drop, disk, ellipse)"))),
    }
}

/// `disk-in-disk:r=0.5,R=1`, `ellipse-in-disk:a=0.6,b=0.3,R=1`,
/// `drop-in-disk:alpha=pi/2,R0=0.8,R=2`.
pub fn parse_fem_geometry(input: &str) -> Result<FemGeometry> {
    let (kind, body) = input.trim().split_once(':').unwrap_or((input.trim(), ""));
    match kind {
        "disk-in-disk" => {
            let f = Fields::new(body, input, &["r", "R"])?;
            Ok(FemGeometry::DiskInDisk { r: f.get("r", None)?, big_r: f.get("R", Some(1.0))? })
        }
        "ellipse-in-disk" => {
            let f = Fields::new(body, input, &["a", "b", "R"])?;
            Ok(FemGeometry::EllipseInDisk { a: f.get("a", None)?, b: f.get("b", None)?, big_r: f.get("R", Some(1.0))? })
        }
        "drop-in-disk" => {
            let f = Fields::new(body, input, &["alpha", "R0", "R"])?;
            Ok(FemGeometry::DropInDisk {
                alpha: f.get("alpha", None)?,
                r0: f.get("R0", Some(0.8))?,
                big_r: f.get("R", Some(2.0))?,
            })
        }
        other => Err(bad(input, format!("unknown geometry `{other}` (disk-in-disk, ellipse-in-disk, drop-in-disk)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

/// `k=-10:-0.05:50`: `count` equally spaced values, both ends included.
pub fn parse_sweep(input: &str) -> Result<Sweep> {
    let (name, range) = input.split_once('=').ok_or_else(|| bad(input, "expected name=start:stop:count"))?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(bad(input, "invalid sweep name"));
    }
    let parts: Vec<&str> = range.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(bad(input, "expected start:stop:count"));
    };
    let (a, b) = (parse_real(a)?, parse_real(b)?);
    let n = parse_count(n, input)?;
    if n == 0 || n > 1_000_000 {
        return Err(bad(input, "count must lie in 1..=1000000"));
    }
    let values = if n == 1 {
        vec![a]
    } else {
        (0..n)
            .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect()
    };
    Ok(Sweep { name: name.to_string(), values })
}

/// `2^-4:2^-9` gives every power of two from `2^-4` down to `2^-9`;
/// a comma list is taken as given. Values are returned in decreasing order.
pub fn parse_eps_range(input: &str) -> Result<Vec<f64>> {
    let s = input.trim();
    let mut out = if let Some((a, b)) = s.split_once(':') {
        let (hi, lo) = (parse_real(a)?, parse_real(b)?);
        let (hi, lo) = if hi >= lo { (hi, lo) } else { (lo, hi) };
        if !(lo > 0.0) {
            return Err(bad(input, "range ends must be positive"));
        }
        let (jh, jl) = (-hi.log2(), -lo.log2());
        let is_pow = |x: f64| (x - x.round()).abs() < 1e-9;
        if !is_pow(jh) || !is_pow(jl) {
            return Err(bad(input, "range ends must be powers of two"));
        }
        let (jh, jl) = (jh.round() as i64, jl.round() as i64);
        if jl - jh > 60 {
            return Err(bad(input, "range too long"));
        }
        (jh..=jl).map(|j| 2f64.powi(-(j as i32))).collect()
    } else {
        s.split(',').map(parse_real).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.iter().any(|&e| !(e > 0.0)) {
        return Err(bad(input, "eps values must be positive"));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out.dedup();
    Ok(out)
}

/// `64,128,256`.
pub fn parse_n_list(input: &str) -> Result<Vec<usize>> {
    let out = input.split(',').map(|p| parse_count(p, input)).collect::<Result<Vec<_>>>()?;
    if out.is_empty() || out.contains(&0) {
        return Err(bad(input, "sizes must be positive"));
    }
    Ok(out)
}

/// `free` or `disk:R=2`.
pub fn parse_kernel_mode(input: &str) -> Result<KernelMode> {
    let s = input.trim();
    if s == "free" {
        return Ok(KernelMode::FreeSpace);
    }
    if let Some(body) = s.strip_prefix("disk:") {
        let f = Fields::new(body, input, &["R"])?;
        let r = f.get("R", None)?;
        if !(r > 0.0) {
            return Err(bad(input, "disk radius must be positive"));
        }
        return Ok(KernelMode::DiskPoisson(r));
    }
    Err(bad(input, "expected `free` or `disk:R=<radius>`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reals() {
        assert_eq!(parse_real("1.5").unwrap(), 1.5);
        assert!((parse_real("pi/2").unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((parse_real("2pi/3").unwrap() - 2.0 * PI / 3.0).abs() < 1e-15);
        assert!((parse_real("2*pi/3").unwrap() - 2.0 * PI / 3.0).abs() < 1e-15);
        assert!((parse_real("-pi").unwrap() + PI).abs() < 1e-15);
        assert_eq!(parse_real("2^-4").unwrap(), 0.0625);
        for bad in ["", "pi/0", "nan", "inf", "1e999", "pix", "x"] {
            assert!(parse_real(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn shapes() {
        let s = parse_shape("drop:alpha=pi/2,R0=0.8").unwrap();
        assert!(matches!(s, ShapeSpec::Drop { r0, .. } if r0 == 0.8));
        assert!(s.build().unwrap().corner().is_some());
        assert_eq!(parse_shape("disk:r=2").unwrap(), ShapeSpec::Disk { r: 2.0 });
        assert_eq!(parse_shape("ellipse:a=2,b=1").unwrap(), ShapeSpec::Ellipse { a: 2.0, b: 1.0 });
        assert!(parse_shape("ellipse:a=2").is_err());
        assert!(parse_shape("drop:alpha=1,alpha=2").is_err());
        assert!(parse_shape("square:s=1").is_err());
        assert!(parse_shape("disk:q=1").is_err());
        assert!(parse_shape("disk:r=1").unwrap().descriptor() == "disk:r=1");
    }

    #[test]
    fn fem_geometries() {
        assert_eq!(
            parse_fem_geometry("disk-in-disk:r=0.5,R=1").unwrap(),
            FemGeometry::DiskInDisk { r: 0.5, big_r: 1.0 }
        );
        assert!(matches!(
            parse_fem_geometry("drop-in-disk:alpha=pi/2").unwrap(),
            FemGeometry::DropInDisk { r0, big_r, .. } if r0 == 0.8 && big_r == 2.0
        ));
        assert!(parse_fem_geometry("disk:r=1").is_err());
    }

    #[test]
    fn sweeps() {
        let s = parse_sweep("k=-10:-0.05:50").unwrap();
        assert_eq!(s.name, "k");
        assert_eq!(s.values.len(), 50);
        assert_eq!(s.values[0], -10.0);
        assert_eq!(s.values[49], -0.05);
        assert_eq!(parse_sweep("k=1:2:1").unwrap().values, vec![1.0]);
        for bad in ["k=1:2", "=1:2:3", "k=1:2:0", "k=a:2:3", "k 1:2:3"] {
            assert!(parse_sweep(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn eps_ranges() {
        assert_eq!(parse_eps_range("2^-4:2^-6").unwrap(), vec![0.0625, 0.03125, 0.015625]);
        assert_eq!(parse_eps_range("2^-6:2^-4").unwrap(), vec![0.0625, 0.03125, 0.015625]);
        assert_eq!(parse_eps_range("0.1,0.01").unwrap(), vec![0.1, 0.01]);
        assert!(parse_eps_range("0.3:0.1").is_err());
        assert!(parse_eps_range("0:2^-4").is_err());
        assert!(parse_eps_range("-1").is_err());
    }

    #[test]
    fn n_lists_and_modes() {
        assert_eq!(parse_n_list("64,128, 256").unwrap(), vec![64, 128, 256]);
        assert!(parse_n_list("64,,128").is_err());
        assert!(parse_n_list("0").is_err());
        assert_eq!(parse_kernel_mode("free").unwrap(), KernelMode::FreeSpace);
        assert_eq!(parse_kernel_mode("disk:R=2").unwrap(), KernelMode::DiskPoisson(2.0));
        assert!(parse_kernel_mode("disk:R=-1").is_err());
        assert!(parse_kernel_mode("disk").is_err());
    }

    proptest! {
        #[test]
        fn parsers_never_panic(s in "\\PC{0,40}") {
            let _ = parse_real(&s);
            let _ = parse_shape(&s);
            let _ = parse_fem_geometry(&s);
            let _ = parse_sweep(&s);
            let _ = parse_eps_range(&s);
            let _ = parse_n_list(&s);
            let _ = parse_kernel_mode(&s);
        }

        #[test]
        fn sweep_endpoints_round_trip(a in -100.0f64..100.0, b in -100.0f64..100.0, n in 2usize..200) {
            let s = parse_sweep(&format!("k={a}:{b}:{n}")).unwrap();
            prop_assert_eq!(s.values.len(), n);
            prop_assert_eq!(s.values[0], a);
            prop_assert_eq!(s.values[n - 1], b);
        }

        #[test]
        fn shape_descriptor_round_trip(a in 0.1f64..3.0, r in 0.1f64..0.95) {
            let s = ShapeSpec::Drop { alpha: a, r0: r };
            prop_assert_eq!(parse_shape(&s.descriptor()).unwrap(), s);
        }
    }
}
