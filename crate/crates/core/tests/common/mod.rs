#![allow(dead_code)]

use std::path::PathBuf;

use isac_rt::channel::{ChirpConfig, SensingLink};
use isac_rt::geometry::{newell_normal, Vec3};
use isac_rt::kinematics::{FacetState, TransceiverState, WorldSnapshot};
use isac_rt::scene::{load_scene, Scene};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> Scene {
    load_scene(fixture_path(name)).expect("fixture loads")
}

/// A fixture link together with the episode start used throughout the tests.
pub struct FixtureLink {
    pub label: &'static str,
    pub scene: Scene,
    pub link: SensingLink,
    pub t0: f64,
}

/// Start of the chirp episode whose centre (epoch 2048) lands on `t_mid`.
pub fn episode_start(t_mid: f64) -> f64 {
    t_mid - 2048.0 * ChirpConfig::default().pri()
}

pub fn fixture_links() -> Vec<FixtureLink> {
    let b = fixture("scenario_b.json");
    let c = fixture("scenario_c.json");
    vec![
        FixtureLink {
            label: "B mono UE",
            scene: b.clone(),
            link: SensingLink::mono_static("UE"),
            t0: 0.0,
        },
        FixtureLink {
            label: "B bi BS-UE",
            scene: b,
            link: SensingLink::bi_static("BS", "UE"),
            t0: 0.0,
        },
        FixtureLink {
            label: "C bi BS-UE",
            scene: c.clone(),
            link: SensingLink::bi_static("BS", "UE"),
            t0: episode_start(5.0),
        },
        FixtureLink {
            label: "C mono UE",
            scene: c,
            link: SensingLink::mono_static("UE"),
            t0: episode_start(5.0),
        },
    ]
}

pub fn static_facet(vertices: Vec<Vec3>) -> FacetState {
    let n = newell_normal(&vertices);
    FacetState {
        area: 0.5 * n.norm(),
        normal: n.normalize(),
        vertices,
        linear_velocity: Vec3::zeros(),
        angular_velocity: Vec3::zeros(),
        origin: Vec3::zeros(),
    }
}

/// Axis-aligned rectangle in the plane `x = const`, `y = const` or `z = const`
/// with the normal pointing along `+axis` or `-axis`.
pub fn rect(axis: usize, at: f64, lo: [f64; 2], hi: [f64; 2], positive: bool) -> FacetState {
    let place = |a: f64, b: f64| {
        let mut p = [0.0; 3];
        p[axis] = at;
        p[(axis + 1) % 3] = a;
        p[(axis + 2) % 3] = b;
        Vec3::from(p)
    };
    let mut v = vec![
        place(lo[0], lo[1]),
        place(hi[0], lo[1]),
        place(hi[0], hi[1]),
        place(lo[0], hi[1]),
    ];
    if !positive {
        v.reverse();
    }
    static_facet(v)
}

pub fn node(p: [f64; 3]) -> TransceiverState {
    TransceiverState {
        position: Vec3::from(p),
        velocity: Vec3::zeros(),
        boresight: Vec3::x(),
    }
}

pub fn world(facets: Vec<FacetState>, nodes: Vec<TransceiverState>) -> WorldSnapshot {
    WorldSnapshot {
        t: 0.0,
        bodies: vec![],
        transceivers: nodes,
        facets,
    }
}

/// Independent segment/convex-polygon test used as an occlusion oracle:
/// plane crossing by signed distances, then a same-side check against every
/// edge. Hits within `eps` of either end are ignored.
pub fn oracle_blocks(p: &Vec3, q: &Vec3, facet: &FacetState, eps: f64) -> bool {
    let n = facet.normal;
    let o = facet.vertices[0];
    let dp = (p - o).dot(&n);
    let dq = (q - o).dot(&n);
    if dp * dq > 0.0 || dp == dq {
        return false;
    }
    let s = dp / (dp - dq);
    let len = (q - p).norm();
    if s * len < eps || (1.0 - s) * len < eps {
        return false;
    }
    let x = p + (q - p) * s;
    let k = facet.vertices.len();
    (0..k).all(|i| {
        let a = facet.vertices[i];
        let b = facet.vertices[(i + 1) % k];
        (b - a).cross(&(x - a)).dot(&n) >= -1e-12
    })
}

pub fn oracle_occluded(snapshot: &WorldSnapshot, p: &Vec3, q: &Vec3, eps: f64) -> bool {
    snapshot.facets.iter().any(|f| oracle_blocks(p, q, f, eps))
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    0.5 * (a + b)
}
