//! Initial data `θ_0` for the solver and for Feynman–Kac averages.

use std::fmt;
use std::str::FromStr;

use anodiss_core::geom::Vec2;

use crate::error::{Error, Result};
use crate::fields::{stream_function, GridScalar, GridVector};
use crate::spectral::Spectral;

const TAU: f64 = std::f64::consts::TAU;

/// Which initial datum to use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theta0Kind {
    /// The sawtooth `x − ½` on `[0,1)`, spectrally smoothed (Gaussian filter
    /// at a sixth of the grid's Nyquist number).
    XCoordinate,
    /// The periodic surrogate `sin(2πx)/(2π)` of the coordinate.
    SinX,
    CosX,
    CosY,
    /// The zero-mean stream function of the velocity field.
    Stream,
    Constant(f64),
}

impl fmt::Display for Theta0Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta0Kind::XCoordinate => write!(f, "x-coordinate"),
            Theta0Kind::SinX => write!(f, "sinx"),
            Theta0Kind::CosX => write!(f, "cosx"),
            Theta0Kind::CosY => write!(f, "cosy"),
            Theta0Kind::Stream => write!(f, "stream"),
            Theta0Kind::Constant(c) => write!(f, "const:{c}"),
        }
    }
}

impl FromStr for Theta0Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "x-coordinate" => Theta0Kind::XCoordinate,
            "sinx" => Theta0Kind::SinX,
            "cosx" => Theta0Kind::CosX,
            "cosy" => Theta0Kind::CosY,
            "stream" => Theta0Kind::Stream,
            _ => match s.strip_prefix("const:") {
                Some(c) => Theta0Kind::Constant(
                    c.parse()
                        .map_err(|_| Error::Config(format!("bad constant initial datum '{s}'")))?,
                ),
                None => {
                    return Err(Error::Config(format!(
                        "unknown initial datum '{s}' (x-coordinate|sinx|cosx|cosy|stream|const:C)"
                    )))
                }
            },
        })
    }
}

/// An initial datum sampled on the solver grid, evaluable anywhere in `ℝ²`
/// by periodic extension.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta0 {
    pub kind: Theta0Kind,
    pub grid: GridScalar,
}

impl Theta0 {
    /// Builds the datum on an `n × n` grid; `Stream` needs the velocity.
    pub fn new(kind: Theta0Kind, n: usize, u: Option<&GridVector>) -> Result<Self> {
        let grid = match kind {
            Theta0Kind::Stream => {
                let u = u.ok_or_else(|| Error::Config("stream initial datum needs a velocity field".into()))?;
                if u.n != n {
                    return Err(Error::Config(format!("velocity grid {} differs from {n}", u.n)));
                }
                stream_function(u, &Spectral::new(n)?)?.h
            }
            Theta0Kind::XCoordinate => smoothed_sawtooth(n)?,
            _ => GridScalar::sample(n, |p| closed_form(kind, p).unwrap_or(0.0)),
        };
        Ok(Theta0 { kind, grid })
    }

    /// Closed form where one exists, otherwise bilinear interpolation of the
    /// grid samples.
    pub fn eval(&self, p: Vec2) -> f64 {
        closed_form(self.kind, p).unwrap_or_else(|| self.grid.interp(p))
    }
}

fn closed_form(kind: Theta0Kind, p: Vec2) -> Option<f64> {
    match kind {
        Theta0Kind::SinX => Some((TAU * p.x).sin() / TAU),
        Theta0Kind::CosX => Some((TAU * p.x).cos()),
        Theta0Kind::CosY => Some((TAU * p.y).cos()),
        Theta0Kind::Constant(c) => Some(c),
        Theta0Kind::XCoordinate | Theta0Kind::Stream => None,
    }
}

/// `x − ½ = −Σ_{k≥1} sin(2πkx)/(πk)` with each mode damped by
/// `exp(−(k/k_c)²)`, `k_c = n/6`.
fn smoothed_sawtooth(n: usize) -> Result<GridScalar> {
    Spectral::new(n)?; // validates the grid size
    let kc = n as f64 / 6.0;
    let kmax = n / 3;
    let row: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            (1..kmax)
                .map(|k| {
                    let kf = k as f64;
                    -(TAU * kf * x).sin() / (std::f64::consts::PI * kf) * (-(kf / kc).powi(2)).exp()
                })
                .sum()
        })
        .collect();
    Ok(GridScalar::sample(n, |p| {
        let i = ((p.x * n as f64).round() as usize) % n;
        row[i]
    }))
}
