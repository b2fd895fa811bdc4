//! Physical parameters of the vehicle: masses, inertias, joint offsets and
//! the wing planform.
//!
//! The left wing is the reflection of the right wing across the body x-z
//! plane. Files may restate it, but a left wing that is not the mirror image
//! of the right wing is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{Mat3, Vec3};

/// Bundled default morphology.
pub const DEFAULT_MORPHOLOGY: &str = include_str!("../data/monarch.toml");

const MIRROR: [f64; 3] = [1.0, -1.0, 1.0];

/// Head and thorax.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub mass: f64,
    /// Inertia about the body-frame origin.
    pub inertia: Mat3,
}

/// One wing or the abdomen.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendageParams {
    pub mass: f64,
    /// Joint location in the body frame (`mu_i`).
    pub joint_offset: Vec3,
    /// Mass center in the appendage frame (`nu_i`).
    pub com_offset: Vec3,
    /// Inertia about the appendage-frame origin.
    pub inertia: Mat3,
}

impl AppendageParams {
    /// Reflection across the body x-z plane.
    pub fn reflected(&self) -> AppendageParams {
        let s = Mat3::from_diagonal(&Vec3::from(MIRROR));
        AppendageParams {
            mass: self.mass,
            joint_offset: s * self.joint_offset,
            com_offset: s * self.com_offset,
            inertia: s * self.inertia * s,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Validation(format!("m_{name} > 0")));
        }
        check_spd(&self.inertia, &format!("J_{name} symmetric positive definite"))?;
        if !(self.joint_offset.norm() < 1.0) {
            return Err(Error::Validation(format!("|mu_{name}| < 1 m")));
        }
        if !(self.com_offset.norm() < 1.0) {
            return Err(Error::Validation(format!("|nu_{name}| < 1 m")));
        }
        Ok(())
    }
}

/// Wing outline: chord as a piecewise-linear function of the spanwise
/// station. The chord runs along the wing-frame x axis from `+c/4` (leading
/// edge) to `-3c/4`; the span runs along `+y` for the right wing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planform {
    pub span: f64,
    /// Normalized spanwise stations in `[0, 1]`, strictly increasing.
    pub stations: Vec<f64>,
    pub chord: Vec<f64>,
}

impl Planform {
    /// Chord at spanwise distance `r` from the root (m).
    pub fn chord_at(&self, r: f64) -> f64 {
        let s = (r / self.span).clamp(0.0, 1.0);
        let k = self.stations.partition_point(|&x| x <= s).clamp(1, self.stations.len() - 1);
        let (s0, s1) = (self.stations[k - 1], self.stations[k]);
        let (c0, c1) = (self.chord[k - 1], self.chord[k]);
        c0 + (c1 - c0) * (s - s0) / (s1 - s0)
    }

    /// Area of one wing, exact for the piecewise-linear outline.
    pub fn area(&self) -> f64 {
        self.stations
            .windows(2)
            .zip(self.chord.windows(2))
            .map(|(s, c)| 0.5 * (c[0] + c[1]) * (s[1] - s[0]) * self.span)
            .sum()
    }

    /// Mass center and inertia about the root of a uniform thin plate of the
    /// given mass, for the right wing.
    pub fn plate_mass_properties(&self, mass: f64) -> (Vec3, Mat3) {
        const STRIPS: usize = 4000;
        let sigma = mass / self.area();
        let dr = self.span / STRIPS as f64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..STRIPS {
            let r = (k as f64 + 0.5) * dr;
            let c = self.chord_at(r);
            let m = sigma * c * dr;
            // chordwise moments over x in [-3c/4, c/4]
            let mx = -sigma * c * c / 4.0 * dr;
            let mxx = sigma * 7.0 * c.powi(3) / 48.0 * dr;
            sx += mx;
            sy += m * r;
            sxx += mxx;
            syy += m * r * r;
            sxy += mx * r;
        }
        let com = Vec3::new(sx, sy, 0.0) / mass;
        #[rustfmt::skip]
        let inertia = Mat3::new(
            syy, -sxy, 0.0,
            -sxy, sxx, 0.0,
            0.0, 0.0, sxx + syy,
        );
        (com, inertia)
    }

    fn validate(&self) -> Result<()> {
        if !(self.span > 0.0) {
            return Err(Error::Validation("planform span > 0".into()));
        }
        if self.stations.len() < 2 || self.stations.len() != self.chord.len() {
            return Err(Error::Validation(
                "planform stations and chord have equal length >= 2".into(),
            ));
        }
        let increasing = self.stations.windows(2).all(|w| w[1] > w[0]);
        if !increasing || self.stations[0] != 0.0 || *self.stations.last().unwrap() != 1.0 {
            return Err(Error::Validation(
                "planform stations strictly increasing from 0 to 1".into(),
            ));
        }
        if !self.chord.iter().all(|&c| c > 0.0) {
            return Err(Error::Validation("planform chord > 0".into()));
        }
        Ok(())
    }
}

/// Complete vehicle description.
#[derive(Debug, Clone, PartialEq)]
pub struct Morphology {
    pub label: String,
    /// Recorded metadata only; not used by the dynamics.
    pub f_natural: Option<f64>,
    pub body: BodyParams,
    /// Right wing, left wing, abdomen.
    pub appendages: [AppendageParams; 3],
    pub planform: Planform,
}

impl Default for Morphology {
    fn default() -> Self {
        Morphology::from_toml_str(DEFAULT_MORPHOLOGY).expect("bundled morphology is valid")
    }
}

impl Morphology {
    pub fn right(&self) -> &AppendageParams {
        &self.appendages[0]
    }

    pub fn left(&self) -> &AppendageParams {
        &self.appendages[1]
    }

    pub fn abdomen(&self) -> &AppendageParams {
        &self.appendages[2]
    }

    pub fn total_mass(&self) -> f64 {
        self.body.mass + self.appendages.iter().map(|a| a.mass).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.body.mass > 0.0) {
            return Err(Error::Validation("m_B > 0".into()));
        }
        check_spd(&self.body.inertia, "J_B symmetric positive definite")?;
        for (p, name) in self.appendages.iter().zip(["R", "L", "A"]) {
            p.validate(name)?;
        }
        let mirror = self.right().reflected();
        let l = self.left();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30);
        let symmetric = close(mirror.mass, l.mass)
            && mirror.joint_offset.iter().zip(l.joint_offset.iter()).all(|(a, b)| close(*a, *b))
            && mirror.com_offset.iter().zip(l.com_offset.iter()).all(|(a, b)| close(*a, *b))
            && mirror.inertia.iter().zip(l.inertia.iter()).all(|(a, b)| close(*a, *b));
        if !symmetric {
            return Err(Error::Validation(
                "left wing is the y-reflection of the right wing".into(),
            ));
        }
        self.planform.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawMorphology = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<morphology>".into(),
            message: e.to_string(),
        })?;
        raw.build()
    }

    /// Serializes with every appendage quantity written explicitly.
    pub fn to_toml_string(&self) -> String {
        let app = |a: &AppendageParams| RawAppendage {
            mass: Some(a.mass),
            joint_offset: Some(a.joint_offset.into()),
            com_offset: Some(a.com_offset.into()),
            inertia: Some(to_rows(&a.inertia)),
            inertia_mode: Some(InertiaMode::Explicit),
        };
        let raw = RawMorphology {
            label: Some(self.label.clone()),
            f_natural: self.f_natural,
            body: Some(RawBody {
                mass: Some(self.body.mass),
                inertia: Some(to_rows(&self.body.inertia)),
            }),
            planform: Some(self.planform.clone()),
            right_wing: Some(app(self.right())),
            left_wing: None,
            abdomen: Some(app(self.abdomen())),
        };
        toml::to_string(&raw).expect("morphology serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

fn check_spd(m: &Mat3, predicate: &str) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm() || m.cholesky().is_none() {
        return Err(Error::Validation(predicate.to_string()));
    }
    Ok(())
}

fn to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

fn from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InertiaMode {
    Explicit,
    Derived,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    mass: Option<f64>,
    inertia: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAppendage {
    mass: Option<f64>,
    joint_offset: Option<[f64; 3]>,
    com_offset: Option<[f64; 3]>,
    inertia: Option<[[f64; 3]; 3]>,
    inertia_mode: Option<InertiaMode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMorphology {
    label: Option<String>,
    f_natural: Option<f64>,
    body: Option<RawBody>,
    planform: Option<Planform>,
    right_wing: Option<RawAppendage>,
    left_wing: Option<RawAppendage>,
    abdomen: Option<RawAppendage>,
}

fn require<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::Schema { field: field.to_string(), reason: "missing".into() })
}

impl RawAppendage {
    fn build(&self, section: &str, planform: &Planform, derivable: bool) -> Result<AppendageParams> {
        let field = |f: &str| format!("{section}.{f}");
        let mass = require(self.mass, &field("mass"))?;
        let joint_offset = Vec3::from(require(self.joint_offset, &field("joint_offset"))?);
        let mode = self.inertia_mode.unwrap_or(InertiaMode::Explicit);
        let (com_offset, inertia) = match mode {
            InertiaMode::Derived if derivable => planform.plate_mass_properties(mass),
            InertiaMode::Derived => {
                return Err(Error::Schema {
                    field: field("inertia_mode"),
                    reason: "only the wings can derive inertia from the planform".into(),
                })
            }
            InertiaMode::Explicit => (
                Vec3::from(require(self.com_offset, &field("com_offset"))?),
                from_rows(&require(self.inertia, &field("inertia"))?),
            ),
        };
        Ok(AppendageParams { mass, joint_offset, com_offset, inertia })
    }
}

impl RawMorphology {
    fn build(self) -> Result<Morphology> {
        let body_raw = require(self.body, "body")?;
        let body = BodyParams {
            mass: require(body_raw.mass, "body.mass")?,
            inertia: from_rows(&require(body_raw.inertia, "body.inertia")?),
        };
        let planform = require(self.planform, "planform")?;
        planform.validate()?;
        let right = require(self.right_wing, "right_wing")?.build("right_wing", &planform, true)?;
        let mirrored = right.reflected();
        let left = match self.left_wing {
            None => mirrored,
            Some(raw) => {
                // any field given explicitly replaces the reflected value
                let mut left = mirrored;
                if let Some(m) = raw.mass {
                    left.mass = m;
                }
                if let Some(mu) = raw.joint_offset {
                    left.joint_offset = mu.into();
                }
                if raw.inertia_mode == Some(InertiaMode::Derived) {
                    let (nu, j) = planform.plate_mass_properties(left.mass);
                    let r = AppendageParams { mass: left.mass, joint_offset: left.joint_offset, com_offset: nu, inertia: j }
                        .reflected();
                    left.com_offset = r.com_offset;
                    left.inertia = r.inertia;
                }
                if let Some(nu) = raw.com_offset {
                    left.com_offset = nu.into();
                }
                if let Some(j) = raw.inertia {
                    left.inertia = from_rows(&j);
                }
                left
            }
        };
        let abdomen = require(self.abdomen, "abdomen")?.build("abdomen", &planform, false)?;
        let morph = Morphology {
            label: self.label.unwrap_or_default(),
            f_natural: self.f_natural,
            body,
            appendages: [right, left, abdomen],
            planform,
        };
        morph.validate()?;
        Ok(morph)
    }
}
