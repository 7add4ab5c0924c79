//! Deterministic path finder for planar macro facets.
//!
//! Three path families are produced for a transmitter/receiver pair:
//!
//! * the direct (LOS) segment, for bi-static links only;
//! * specular chains up to [`TraceConfig::max_specular_order`], found with
//!   the image method: the transmitter is mirrored recursively across the
//!   facet planes of a candidate sequence, and the chain is rebuilt backwards
//!   from the receiver and validated against facet bounds, facet sidedness
//!   and occlusion;
//! * first-order diffuse bounces through stratified sample points on every
//!   facet that faces both ends.
//!
//! Facets are one-sided: only the side their normal points to interacts.
//! Every facet occludes regardless of side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3, SPEED_OF_LIGHT};
use crate::kinematics::{FacetState, WorldSnapshot};

pub const MAX_SPECULAR_ORDER: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub max_specular_order: u8,
    pub diffuse_enabled: bool,
    /// Samples per facet (per patch for facets larger than `max_patch_area`).
    pub diffuse_samples_per_facet: u32,
    /// Facets larger than this (m^2) are split into patches before sampling.
    pub max_patch_area: f64,
    /// Jitter of each sample around its stratum centre, as a fraction of the
    /// stratum size (0 puts samples exactly at the centres).
    pub diffuse_jitter: f64,
    pub seed: u64,
    /// Intersections closer than this (m) to a segment end are ignored.
    pub occlusion_epsilon: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            max_specular_order: 2,
            diffuse_enabled: true,
            diffuse_samples_per_facet: 16,
            max_patch_area: 25.0,
            diffuse_jitter: 0.25,
            seed: 0,
            occlusion_epsilon: 1e-4,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_specular_order > MAX_SPECULAR_ORDER {
            return Err(Error::validation(
                "trace config",
                format!("max_specular_order {} > {MAX_SPECULAR_ORDER}", self.max_specular_order),
            ));
        }
        if !(self.occlusion_epsilon >= 0.0) {
            return Err(Error::validation("trace config", "occlusion_epsilon must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.diffuse_jitter) {
            return Err(Error::validation("trace config", "diffuse_jitter must be in [0, 0.5)"));
        }
        if !(self.max_patch_area > 0.0) {
            return Err(Error::validation("trace config", "max_patch_area must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathKind {
    Los,
    Specular { order: u8 },
    Diffuse,
}

impl PathKind {
    pub fn code(&self) -> u8 {
        match self {
            PathKind::Los => 0,
            PathKind::Specular { .. } => 1,
            PathKind::Diffuse => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PathKind::Los => "los",
            PathKind::Specular { .. } => "specular",
            PathKind::Diffuse => "diffuse",
        }
    }
}

/// One bounce of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub facet: usize,
    pub point: Vec3,
    /// Unit direction of the incoming segment.
    pub k_in: Vec3,
    /// Unit direction of the outgoing segment.
    pub k_out: Vec3,
    /// Specular mirror of `k_in` about the facet normal.
    pub k_mirror: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseSample {
    pub index: u32,
    /// Facet area represented by this sample (m^2).
    pub effective_area: f64,
}

/// Identity of a path across epochs: kind, facet sequence and, for diffuse
/// paths, the sample index on the facet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey {
    pub kind: PathKind,
    pub facets: Vec<u32>,
    pub sample: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub kind: PathKind,
    pub tx: usize,
    pub rx: usize,
    pub interactions: Vec<Interaction>,
    pub diffuse: Option<DiffuseSample>,
    /// Polyline from the transmitter through every interaction to the receiver.
    pub vertices: Vec<Vec3>,
    pub total_length: f64,
    /// Unit direction leaving the transmitter.
    pub departure: Vec3,
    /// Unit direction of travel arriving at the receiver.
    pub arrival: Vec3,
}

impl PathGeometry {
    fn from_vertices(
        kind: PathKind,
        tx: usize,
        rx: usize,
        vertices: Vec<Vec3>,
        facets: &[usize],
        snapshot: &WorldSnapshot,
        diffuse: Option<DiffuseSample>,
    ) -> Self {
        let mut total_length = 0.0;
        let mut dirs = Vec::with_capacity(vertices.len() - 1);
        for w in vertices.windows(2) {
            let d = w[1] - w[0];
            let len = d.norm();
            total_length += len;
            dirs.push(d / len);
        }
        let interactions = facets
            .iter()
            .enumerate()
            .map(|(j, &f)| {
                let k_in = dirs[j];
                Interaction {
                    facet: f,
                    point: vertices[j + 1],
                    k_in,
                    k_out: dirs[j + 1],
                    k_mirror: geometry::mirror_direction(&k_in, &snapshot.facets[f].normal),
                }
            })
            .collect();
        PathGeometry {
            kind,
            tx,
            rx,
            interactions,
            diffuse,
            departure: dirs[0],
            arrival: dirs[dirs.len() - 1],
            vertices,
            total_length,
        }
    }

    pub fn key(&self) -> PathKey {
        PathKey {
            kind: self.kind,
            facets: self.interactions.iter().map(|i| i.facet as u32).collect(),
            sample: self.diffuse.map(|d| d.index),
        }
    }

    /// Propagation delay (s).
    pub fn delay(&self) -> f64 {
        self.total_length / SPEED_OF_LIGHT
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }
}

/// True if the segment `p -> q` is blocked by any facet of the snapshot.
pub fn is_occluded(snapshot: &WorldSnapshot, p: &Vec3, q: &Vec3, eps: f64) -> bool {
    snapshot
        .facets
        .iter()
        .any(|f| geometry::segment_hits_polygon(p, q, &f.vertices, &f.normal, eps))
}

fn is_mono_static(snapshot: &WorldSnapshot, tx: usize, rx: usize) -> bool {
    tx == rx || snapshot.transceivers[tx].position == snapshot.transceivers[rx].position
}

/// Direct path, if the link is bi-static and the segment is unoccluded.
pub fn trace_los(snapshot: &WorldSnapshot, tx: usize, rx: usize, config: &TraceConfig) -> Option<PathGeometry> {
    if is_mono_static(snapshot, tx, rx) {
        return None;
    }
    let a = snapshot.transceivers[tx].position;
    let b = snapshot.transceivers[rx].position;
    if is_occluded(snapshot, &a, &b, config.occlusion_epsilon) {
        return None;
    }
    Some(PathGeometry::from_vertices(
        PathKind::Los,
        tx,
        rx,
        vec![a, b],
        &[],
        snapshot,
        None,
    ))
}

fn in_front(f: &FacetState, p: &Vec3) -> bool {
    (p - f.vertices[0]).dot(&f.normal) > 0.0
}

/// Specular chains of order 1 to `config.max_specular_order`.
pub fn trace_specular(snapshot: &WorldSnapshot, tx: usize, rx: usize, config: &TraceConfig) -> Vec<PathGeometry> {
    let mut out: Vec<PathGeometry> = Vec::new();
    if config.max_specular_order == 0 || snapshot.facets.is_empty() {
        return out;
    }
    let src = snapshot.transceivers[tx].position;
    let dst = snapshot.transceivers[rx].position;
    let mut seq = Vec::with_capacity(config.max_specular_order as usize);
    let mut images = Vec::with_capacity(config.max_specular_order as usize + 1);
    images.push(src);
    extend_sequences(snapshot, tx, rx, &src, &dst, config, &mut seq, &mut images, &mut out);

    // Adjacent coplanar facets can yield the same chain through a shared edge.
    let mut unique: Vec<PathGeometry> = Vec::with_capacity(out.len());
    for p in out {
        let dup = unique.iter().any(|q| {
            q.interactions.len() == p.interactions.len()
                && q.interactions
                    .iter()
                    .zip(&p.interactions)
                    .all(|(a, b)| (a.point - b.point).norm() <= 1e-6)
        });
        if !dup {
            unique.push(p);
        }
    }
    unique
}

#[allow(clippy::too_many_arguments)]
fn extend_sequences(
    snapshot: &WorldSnapshot,
    tx: usize,
    rx: usize,
    src: &Vec3,
    dst: &Vec3,
    config: &TraceConfig,
    seq: &mut Vec<usize>,
    images: &mut Vec<Vec3>,
    out: &mut Vec<PathGeometry>,
) {
    for (f, facet) in snapshot.facets.iter().enumerate() {
        if seq.last() == Some(&f) {
            continue;
        }
        if seq.is_empty() && !in_front(facet, src) {
            continue;
        }
        let image = geometry::mirror_point(images.last().unwrap(), &facet.vertices[0], &facet.normal);
        seq.push(f);
        images.push(image);
        if in_front(facet, dst) {
            if let Some(p) = back_trace(snapshot, tx, rx, src, dst, seq, images, config) {
                out.push(p);
            }
        }
        if seq.len() < config.max_specular_order as usize {
            extend_sequences(snapshot, tx, rx, src, dst, config, seq, images, out);
        }
        seq.pop();
        images.pop();
    }
}

#[allow(clippy::too_many_arguments)]
fn back_trace(
    snapshot: &WorldSnapshot,
    tx: usize,
    rx: usize,
    src: &Vec3,
    dst: &Vec3,
    seq: &[usize],
    images: &[Vec3],
    config: &TraceConfig,
) -> Option<PathGeometry> {
    let k = seq.len();
    let mut points = vec![Vec3::zeros(); k];
    let mut target = *dst;
    for j in (0..k).rev() {
        let facet = &snapshot.facets[seq[j]];
        let image = images[j + 1];
        let dir = target - image;
        let s = geometry::ray_plane(&image, &dir, &facet.vertices[0], &facet.normal)?;
        if !(s > 0.0 && s < 1.0) {
            return None;
        }
        let p = image + dir * s;
        if !geometry::point_in_convex_polygon(&p, &facet.vertices, &facet.normal, 1e-9) {
            return None;
        }
        points[j] = p;
        target = p;
    }
    let mut vertices = Vec::with_capacity(k + 2);
    vertices.push(*src);
    vertices.extend_from_slice(&points);
    vertices.push(*dst);
    for j in 0..k {
        let facet = &snapshot.facets[seq[j]];
        if !in_front(facet, &vertices[j]) || !in_front(facet, &vertices[j + 2]) {
            return None;
        }
    }
    for w in vertices.windows(2) {
        if (w[1] - w[0]).norm() <= config.occlusion_epsilon {
            return None;
        }
        if is_occluded(snapshot, &w[0], &w[1], config.occlusion_epsilon) {
            return None;
        }
    }
    Some(PathGeometry::from_vertices(
        PathKind::Specular { order: k as u8 },
        tx,
        rx,
        vertices,
        seq,
        snapshot,
        None,
    ))
}

/// Deterministic stratified sample points on facet `facet_index` of the
/// snapshot, with the area each one represents.
///
/// Points are generated in the facet's own parameter space, so they stay
/// attached to the same material points as a body moves. Quads use the
/// bilinear map of their vertices; triangles use the equal-area square to
/// triangle map.
pub fn diffuse_samples(snapshot: &WorldSnapshot, facet_index: usize, config: &TraceConfig) -> Vec<(Vec3, f64)> {
    let facet = &snapshot.facets[facet_index];
    let n = config.diffuse_samples_per_facet as usize;
    if n == 0 {
        return Vec::new();
    }
    let v = &facet.vertices;
    let (len_u, len_v) = if v.len() == 4 {
        (
            0.5 * ((v[1] - v[0]).norm() + (v[2] - v[3]).norm()),
            0.5 * ((v[3] - v[0]).norm() + (v[2] - v[1]).norm()),
        )
    } else {
        let side = facet.area.sqrt();
        (side, side)
    };
    let (pu, pv) = if facet.area > config.max_patch_area {
        let edge = config.max_patch_area.sqrt();
        ((len_u / edge).ceil().max(1.0) as usize, (len_v / edge).ceil().max(1.0) as usize)
    } else {
        (1, 1)
    };
    let nu = (n as f64).sqrt().ceil() as usize;
    let nv = n.div_ceil(nu);
    let total = n * pu * pv;
    let weight = facet.area / total as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (facet_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = Vec::with_capacity(total);
    for patch in 0..pu * pv {
        let (iu_p, iv_p) = (patch % pu, patch / pu);
        for s in 0..n {
            let (iu, iv) = (s % nu, s / nu);
            let jitter_u = config.diffuse_jitter * (2.0 * rng.random::<f64>() - 1.0);
            let jitter_v = config.diffuse_jitter * (2.0 * rng.random::<f64>() - 1.0);
            let u = (iu_p as f64 + (iu as f64 + 0.5 + jitter_u) / nu as f64) / pu as f64;
            let w = (iv_p as f64 + (iv as f64 + 0.5 + jitter_v) / nv as f64) / pv as f64;
            let p = if v.len() == 4 {
                v[0] * ((1.0 - u) * (1.0 - w)) + v[1] * (u * (1.0 - w)) + v[2] * (u * w) + v[3] * ((1.0 - u) * w)
            } else {
                let r = u.sqrt();
                v[0] * (1.0 - r) + v[1] * (r * (1.0 - w)) + v[2] * (r * w)
            };
            out.push((p, weight));
        }
    }
    out
}

/// First-order diffuse paths through the sample points of every facet.
pub fn trace_diffuse(snapshot: &WorldSnapshot, tx: usize, rx: usize, config: &TraceConfig) -> Vec<PathGeometry> {
    let mut out = Vec::new();
    if !config.diffuse_enabled || config.diffuse_samples_per_facet == 0 {
        return out;
    }
    let src = snapshot.transceivers[tx].position;
    let dst = snapshot.transceivers[rx].position;
    for (f, facet) in snapshot.facets.iter().enumerate() {
        if !in_front(facet, &src) || !in_front(facet, &dst) {
            continue;
        }
        for (index, (p, area)) in diffuse_samples(snapshot, f, config).into_iter().enumerate() {
            if (p - src).norm() <= config.occlusion_epsilon || (dst - p).norm() <= config.occlusion_epsilon {
                continue;
            }
            if is_occluded(snapshot, &src, &p, config.occlusion_epsilon)
                || is_occluded(snapshot, &p, &dst, config.occlusion_epsilon)
            {
                continue;
            }
            out.push(PathGeometry::from_vertices(
                PathKind::Diffuse,
                tx,
                rx,
                vec![src, p, dst],
                &[f],
                snapshot,
                Some(DiffuseSample {
                    index: index as u32,
                    effective_area: area,
                }),
            ));
        }
    }
    out
}

/// All paths for one link: LOS, specular chains, then diffuse bounces.
pub fn trace_paths(snapshot: &WorldSnapshot, tx: usize, rx: usize, config: &TraceConfig) -> Vec<PathGeometry> {
    let mut paths: Vec<PathGeometry> = trace_los(snapshot, tx, rx, config).into_iter().collect();
    paths.extend(trace_specular(snapshot, tx, rx, config));
    paths.extend(trace_diffuse(snapshot, tx, rx, config));
    paths
}

/// Rate of change of the path length (m/s), from the velocities of the
/// transmitter, receiver and the material point of each interaction facet.
///
/// Reflection points slide along their facets as geometry moves, but the
/// sliding component is tangential and its projections onto the incoming and
/// outgoing directions cancel under the mirror law, so the material velocity
/// gives the exact derivative.
pub fn path_length_rate(path: &PathGeometry, snapshot: &WorldSnapshot) -> f64 {
    let mut velocities = Vec::with_capacity(path.vertices.len());
    velocities.push(snapshot.transceivers[path.tx].velocity);
    for i in &path.interactions {
        velocities.push(snapshot.facets[i.facet].point_velocity(&i.point));
    }
    velocities.push(snapshot.transceivers[path.rx].velocity);
    path.vertices
        .windows(2)
        .zip(velocities.windows(2))
        .map(|(p, v)| {
            let u = (p[1] - p[0]).normalize();
            (v[1] - v[0]).dot(&u)
        })
        .sum()
}

/// Doppler shift (Hz) of a path at carrier `f_c`; positive when the path is
/// shrinking.
pub fn path_doppler(path: &PathGeometry, snapshot: &WorldSnapshot, f_c: f64) -> f64 {
    -f_c / SPEED_OF_LIGHT * path_length_rate(path, snapshot)
}
