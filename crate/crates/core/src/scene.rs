//! Static geometry, materials, transceivers and mobile bodies of the twin.
//!
//! Scenes are loaded from JSON (see `docs/scene-format.md`). Loading
//! validates every invariant and resolves name references into indices, so a
//! [`Scene`] in memory is always consistent and immutable.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3};

/// The only accepted value of the top-level `units` key.
pub const SCENE_UNITS: &str = "m,s,rad";

const COPLANAR_TOL: f64 = 1e-6;
const MIN_FACET_AREA: f64 = 1e-9;
/// Pattern floor relative to peak gain (dB).
pub const PATTERN_FLOOR_DB: f64 = -30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub rel_permittivity: f64,
    /// Conductivity in S/m.
    pub conductivity: f64,
    /// Fraction of reflected field amplitude scattered diffusely, in [0, 1].
    pub scattering_coeff: f64,
    /// Sharpness of the directive diffuse lobe.
    pub lobe_exponent: u32,
}

impl Material {
    /// Specular reflection reduction `R = sqrt(1 - S^2)`.
    pub fn reflection_reduction(&self) -> f64 {
        crate::em::split_power(self.scattering_coeff).expect("validated on load")
    }

    fn validate(&self) -> Result<()> {
        let entity = || format!("material '{}'", self.name);
        if !(self.rel_permittivity >= 1.0) {
            return Err(Error::validation(
                entity(),
                format!("rel_permittivity {} < 1", self.rel_permittivity),
            ));
        }
        if !(self.conductivity >= 0.0) {
            return Err(Error::validation(
                entity(),
                format!("conductivity {} < 0", self.conductivity),
            ));
        }
        if !(0.0..=1.0).contains(&self.scattering_coeff) {
            return Err(Error::validation(
                entity(),
                format!("scattering_coeff {} outside [0, 1]", self.scattering_coeff),
            ));
        }
        if self.lobe_exponent < 1 {
            return Err(Error::validation(entity(), "lobe_exponent must be >= 1"));
        }
        Ok(())
    }
}

/// Built-in material presets.
///
/// Permittivity and conductivity follow the usual ITU-R P.2040 fits
/// evaluated at 79 GHz. Metal is modelled as a near-perfect conductor
/// (`sigma = 1e10` S/m) so that it reflects totally even at grazing angles.
/// The scattering coefficients and lobe exponents are our own choices and
/// are frozen by `fixtures/golden/materials.json`.
pub fn material_defaults() -> Vec<Material> {
    vec![
        Material {
            name: "glass".into(),
            rel_permittivity: 6.31,
            conductivity: 1.06,
            scattering_coeff: 0.1,
            lobe_exponent: 8,
        },
        Material {
            name: "concrete".into(),
            rel_permittivity: 5.24,
            conductivity: 1.40,
            scattering_coeff: 0.4,
            lobe_exponent: 4,
        },
        Material {
            name: "metal".into(),
            rel_permittivity: 1.0,
            conductivity: 1e10,
            scattering_coeff: 0.05,
            lobe_exponent: 16,
        },
        Material {
            name: "brick".into(),
            rel_permittivity: 3.91,
            conductivity: 0.048,
            scattering_coeff: 0.5,
            lobe_exponent: 3,
        },
    ]
}

pub fn material_preset(name: &str) -> Result<Material> {
    material_defaults()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::NotFound(format!("material preset '{name}'")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub id: String,
    /// Three or four coplanar vertices. For body facets these are in the
    /// body frame; see [`crate::kinematics::WorldSnapshot`] for world
    /// coordinates.
    pub vertices: Vec<Vec3>,
    pub material: usize,
    pub body: Option<usize>,
    /// Outward unit normal (right-hand rule over the vertex order).
    pub normal: Vec3,
    pub area: f64,
}

impl Facet {
    fn new(id: String, vertices: Vec<Vec3>, material: usize, body: Option<usize>) -> Result<Self> {
        let entity = || format!("facet '{id}'");
        if vertices.len() != 3 && vertices.len() != 4 {
            return Err(Error::validation(
                entity(),
                format!("{} vertices (expected 3 or 4)", vertices.len()),
            ));
        }
        let n = geometry::newell_normal(&vertices);
        let area = 0.5 * n.norm();
        if !(area > MIN_FACET_AREA) {
            return Err(Error::validation(entity(), format!("degenerate (area {area:e} m^2)")));
        }
        let normal = n / n.norm();
        let c = geometry::centroid(&vertices);
        for v in &vertices {
            let off = (v - c).dot(&normal).abs();
            if off > COPLANAR_TOL {
                return Err(Error::validation(
                    entity(),
                    format!("vertices not coplanar (offset {off:e} m)"),
                ));
            }
        }
        let k = vertices.len();
        for i in 0..k {
            let e0 = vertices[(i + 1) % k] - vertices[i];
            let e1 = vertices[(i + 2) % k] - vertices[(i + 1) % k];
            if e0.cross(&e1).dot(&normal) <= 0.0 {
                return Err(Error::validation(entity(), "polygon is not convex"));
            }
        }
        Ok(Facet {
            id,
            vertices,
            material,
            body,
            normal,
            area,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    BS,
    UE,
}

/// Separable Gaussian-in-dB antenna pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub peak_gain_dbi: f64,
    /// Full 3 dB beamwidth in azimuth (degrees).
    pub hpbw_azimuth_deg: f64,
    /// Full 3 dB beamwidth in elevation (degrees).
    pub hpbw_elevation_deg: f64,
}

impl AntennaPattern {
    pub fn isotropic() -> Self {
        AntennaPattern {
            peak_gain_dbi: 0.0,
            hpbw_azimuth_deg: f64::INFINITY,
            hpbw_elevation_deg: f64::INFINITY,
        }
    }

    /// Gain in dBi at azimuth/elevation offsets (radians) from boresight.
    ///
    /// `G = G_peak - 3 [(az / (hpbw_az/2))^2 + (el / (hpbw_el/2))^2]`,
    /// floored at `G_peak - 30`.
    pub fn gain_db(&self, az: f64, el: f64) -> f64 {
        let ha = 0.5 * self.hpbw_azimuth_deg.to_radians();
        let he = 0.5 * self.hpbw_elevation_deg.to_radians();
        let roll = 3.0 * ((az / ha).powi(2) + (el / he).powi(2));
        self.peak_gain_dbi - roll.min(-PATTERN_FLOOR_DB)
    }

    /// Gain in dBi towards world direction `dir` for an antenna whose
    /// boresight is `boresight` (unit). Azimuth is measured in the horizontal
    /// plane of the antenna frame, elevation out of it.
    pub fn gain_towards_db(&self, boresight: &Vec3, dir: &Vec3) -> f64 {
        let (az, el) = pattern_angles(boresight, dir);
        self.gain_db(az, el)
    }

    fn validate(&self, owner: &str) -> Result<()> {
        for (label, v) in [
            ("hpbw_azimuth_deg", self.hpbw_azimuth_deg),
            ("hpbw_elevation_deg", self.hpbw_elevation_deg),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(
                    format!("transceiver '{owner}'"),
                    format!("{label} must be > 0"),
                ));
            }
        }
        if !self.peak_gain_dbi.is_finite() {
            return Err(Error::validation(
                format!("transceiver '{owner}'"),
                "peak_gain_dbi must be finite",
            ));
        }
        Ok(())
    }
}

/// Azimuth and elevation (radians) of `dir` in the antenna frame spanned by
/// `boresight`, a horizontal right vector and the derived up vector.
pub fn pattern_angles(boresight: &Vec3, dir: &Vec3) -> (f64, f64) {
    let b = boresight.normalize();
    let d = dir.normalize();
    let mut right = b.cross(&Vec3::z());
    if right.norm() < 1e-9 {
        // boresight vertical: pick world x as the reference
        right = b.cross(&Vec3::x());
    }
    let right = right.normalize();
    let up = right.cross(&b);
    let x = d.dot(&b);
    let y = d.dot(&right);
    let z = d.dot(&up);
    let az = y.atan2(x);
    let el = z.atan2((x * x + y * y).sqrt());
    (az, el)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mount {
    Fixed {
        position: Vec3,
        boresight: Vec3,
    },
    /// Rigidly attached to a mobile body; offset and boresight in body frame.
    Attached {
        body: usize,
        offset: Vec3,
        boresight: Vec3,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transceiver {
    pub id: String,
    pub role: Role,
    pub mount: Mount,
    pub pattern: AntennaPattern,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vec3,
    pub yaw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileBody {
    pub id: String,
    pub trajectory: Vec<Waypoint>,
    /// Indices into [`Scene::facets`] of the rigidly attached facets.
    pub facets: Vec<usize>,
}

impl MobileBody {
    pub fn time_span(&self) -> (f64, f64) {
        (
            self.trajectory[0].t,
            self.trajectory[self.trajectory.len() - 1].t,
        )
    }

    fn validate(&self) -> Result<()> {
        let entity = || format!("body '{}'", self.id);
        if self.trajectory.len() < 2 {
            return Err(Error::validation(entity(), "needs at least 2 waypoints"));
        }
        for w in self.trajectory.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::validation(
                    entity(),
                    format!("waypoint timestamps not strictly increasing ({} -> {})", w[0].t, w[1].t),
                ));
            }
        }
        let with_yaw = self.trajectory.iter().filter(|w| w.yaw.is_some()).count();
        if with_yaw != 0 && with_yaw != self.trajectory.len() {
            return Err(Error::validation(
                entity(),
                "yaw must be given for all waypoints or none",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub materials: Vec<Material>,
    pub facets: Vec<Facet>,
    pub transceivers: Vec<Transceiver>,
    pub bodies: Vec<MobileBody>,
}

impl Scene {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scene::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scene serializes")
    }

    pub fn transceiver_index(&self, id: &str) -> Result<usize> {
        self.transceivers
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::NotFound(format!("transceiver '{id}'")))
    }

    pub fn material(&self, facet: usize) -> &Material {
        &self.materials[self.facets[facet].material]
    }

    /// Time interval covered by every mobile body, or `None` if the scene
    /// is static.
    pub fn time_overlap(&self) -> Option<(f64, f64)> {
        self.bodies.iter().map(MobileBody::time_span).reduce(|a, b| (a.0.max(b.0), a.1.min(b.1)))
    }

    fn from_file(file: SceneFile) -> Result<Self> {
        if file.units != SCENE_UNITS {
            return Err(Error::validation(
                "units",
                format!("'{}' (must be '{SCENE_UNITS}')", file.units),
            ));
        }

        let mut materials = Vec::with_capacity(file.materials.len());
        let mut material_ix = HashMap::new();
        for m in file.materials {
            let mat = m.resolve()?;
            mat.validate()?;
            if material_ix.insert(mat.name.clone(), materials.len()).is_some() {
                return Err(Error::validation(format!("material '{}'", mat.name), "duplicate name"));
            }
            materials.push(mat);
        }

        let mut bodies = Vec::with_capacity(file.bodies.len());
        let mut body_ix = HashMap::new();
        for b in file.bodies {
            let body = MobileBody {
                id: b.id,
                trajectory: b
                    .trajectory
                    .into_iter()
                    .map(|w| Waypoint {
                        t: w.t,
                        position: w.position.into(),
                        yaw: w.yaw,
                    })
                    .collect(),
                facets: Vec::new(),
            };
            body.validate()?;
            if body_ix.insert(body.id.clone(), bodies.len()).is_some() {
                return Err(Error::validation(format!("body '{}'", body.id), "duplicate id"));
            }
            bodies.push(body);
        }

        let mut facets = Vec::with_capacity(file.facets.len());
        for (i, f) in file.facets.into_iter().enumerate() {
            let id = f.id.unwrap_or_else(|| format!("facet[{i}]"));
            let material = *material_ix.get(&f.material).ok_or_else(|| {
                Error::validation(format!("facet '{id}'"), format!("unknown material '{}'", f.material))
            })?;
            let body = match f.body {
                Some(name) => Some(*body_ix.get(&name).ok_or_else(|| {
                    Error::validation(format!("facet '{id}'"), format!("unknown body '{name}'"))
                })?),
                None => None,
            };
            let facet = Facet::new(id, f.vertices.into_iter().map(Vec3::from).collect(), material, body)?;
            if let Some(b) = body {
                bodies[b].facets.push(facets.len());
            }
            facets.push(facet);
        }

        let mut transceivers: Vec<Transceiver> = Vec::with_capacity(file.transceivers.len());
        for t in file.transceivers {
            let entity = || format!("transceiver '{}'", t.id);
            if transceivers.iter().any(|o| o.id == t.id) {
                return Err(Error::validation(entity(), "duplicate id"));
            }
            let unit = |v: [f64; 3]| -> Result<Vec3> {
                let v = Vec3::from(v);
                let n = v.norm();
                if !(n > 1e-12) || !n.is_finite() {
                    return Err(Error::validation(entity(), "boresight must be non-zero"));
                }
                // leave already-normalized vectors untouched so that saving and
                // reloading a scene is lossless
                Ok(if (n - 1.0).abs() <= 4.0 * f64::EPSILON { v } else { v / n })
            };
            let mount = match t.mount {
                MountFile::Fixed { position, boresight } => Mount::Fixed {
                    position: position.into(),
                    boresight: unit(boresight)?,
                },
                MountFile::Body {
                    body,
                    offset,
                    boresight,
                } => Mount::Attached {
                    body: *body_ix
                        .get(&body)
                        .ok_or_else(|| Error::validation(entity(), format!("unknown body '{body}'")))?,
                    offset: offset.into(),
                    boresight: unit(boresight)?,
                },
            };
            t.pattern.validate(&t.id)?;
            transceivers.push(Transceiver {
                id: t.id,
                role: t.role,
                mount,
                pattern: t.pattern,
                tx_power_dbm: t.tx_power_dbm,
                noise_figure_db: t.noise_figure_db,
            });
        }

        Ok(Scene {
            materials,
            facets,
            transceivers,
            bodies,
        })
    }

    fn to_file(&self) -> SceneFile {
        let arr = |v: &Vec3| [v.x, v.y, v.z];
        SceneFile {
            units: SCENE_UNITS.into(),
            materials: self
                .materials
                .iter()
                .map(|m| MaterialFile {
                    name: m.name.clone(),
                    preset: None,
                    rel_permittivity: Some(m.rel_permittivity),
                    conductivity: Some(m.conductivity),
                    scattering_coeff: Some(m.scattering_coeff),
                    lobe_exponent: Some(m.lobe_exponent),
                })
                .collect(),
            facets: self
                .facets
                .iter()
                .map(|f| FacetFile {
                    id: Some(f.id.clone()),
                    vertices: f.vertices.iter().map(arr).collect(),
                    material: self.materials[f.material].name.clone(),
                    body: f.body.map(|b| self.bodies[b].id.clone()),
                })
                .collect(),
            transceivers: self
                .transceivers
                .iter()
                .map(|t| TransceiverFile {
                    id: t.id.clone(),
                    role: t.role,
                    mount: match &t.mount {
                        Mount::Fixed { position, boresight } => MountFile::Fixed {
                            position: arr(position),
                            boresight: arr(boresight),
                        },
                        Mount::Attached {
                            body,
                            offset,
                            boresight,
                        } => MountFile::Body {
                            body: self.bodies[*body].id.clone(),
                            offset: arr(offset),
                            boresight: arr(boresight),
                        },
                    },
                    pattern: t.pattern,
                    tx_power_dbm: t.tx_power_dbm,
                    noise_figure_db: t.noise_figure_db,
                })
                .collect(),
            bodies: self
                .bodies
                .iter()
                .map(|b| BodyFile {
                    id: b.id.clone(),
                    trajectory: b
                        .trajectory
                        .iter()
                        .map(|w| WaypointFile {
                            t: w.t,
                            position: arr(&w.position),
                            yaw: w.yaw,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Load and validate a scene description file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_json_str(&text)
}

// On-disk representation.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    units: String,
    #[serde(default)]
    materials: Vec<MaterialFile>,
    #[serde(default)]
    facets: Vec<FacetFile>,
    #[serde(default)]
    transceivers: Vec<TransceiverFile>,
    #[serde(default)]
    bodies: Vec<BodyFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel_permittivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conductivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scattering_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lobe_exponent: Option<u32>,
}

impl MaterialFile {
    fn resolve(self) -> Result<Material> {
        let base = match &self.preset {
            Some(p) => Some(material_preset(p)?),
            None => None,
        };
        let missing = |field: &str| {
            Error::validation(format!("material '{}'", self.name), format!("missing '{field}'"))
        };
        Ok(Material {
            rel_permittivity: self
                .rel_permittivity
                .or(base.as_ref().map(|b| b.rel_permittivity))
                .ok_or_else(|| missing("rel_permittivity"))?,
            conductivity: self
                .conductivity
                .or(base.as_ref().map(|b| b.conductivity))
                .ok_or_else(|| missing("conductivity"))?,
            scattering_coeff: self
                .scattering_coeff
                .or(base.as_ref().map(|b| b.scattering_coeff))
                .ok_or_else(|| missing("scattering_coeff"))?,
            lobe_exponent: self
                .lobe_exponent
                .or(base.as_ref().map(|b| b.lobe_exponent))
                .ok_or_else(|| missing("lobe_exponent"))?,
            name: self.name,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FacetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    vertices: Vec<[f64; 3]>,
    material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum MountFile {
    Fixed {
        position: [f64; 3],
        boresight: [f64; 3],
    },
    Body {
        body: String,
        offset: [f64; 3],
        boresight: [f64; 3],
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransceiverFile {
    id: String,
    role: Role,
    mount: MountFile,
    pattern: AntennaPattern,
    tx_power_dbm: f64,
    noise_figure_db: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointFile {
    t: f64,
    position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    yaw: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyFile {
    id: String,
    trajectory: Vec<WaypointFile>,
}
