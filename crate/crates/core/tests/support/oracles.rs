//! Independent oracles and seeded generators shared by the integration
//! tests and the acceptance runner.
#![allow(dead_code)]

use demo2plan::affordance::{codebook, code_vector};
use demo2plan::perception::{synthesize_stream, SyntheticScript, SyntheticStream, Vec3};
use demo2plan::task_model::{ActionKind, Relation, SceneDescription, SceneObject, TaskStep};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

// ---- geometry ----

pub struct Arc {
    pub center: Vec3,
    pub radius: f64,
    pub angle: f64,
    /// Unit axis about which the samples turn counterclockwise.
    pub axis: Vec3,
    pub points: Vec<Vec3>,
}

pub fn random_axis(rng: &mut StdRng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

/// `samples` points on an arc, with isotropic Gaussian noise of `sigma` m.
pub fn arc(rng: &mut StdRng, center: Vec3, radius: f64, angle: f64, samples: usize, sigma: f64) -> Arc {
    let axis = random_axis(rng);
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    let noise = Normal::new(0.0, sigma.max(0.0)).unwrap();
    let jitter = |rng: &mut StdRng| {
        if sigma > 0.0 {
            Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
        } else {
            Vec3::zeros()
        }
    };
    let start: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let points = (0..samples)
        .map(|i| {
            let t = start + angle * i as f64 / (samples - 1) as f64;
            center + (u * t.cos() + v * t.sin()) * radius + jitter(rng)
        })
        .collect();
    Arc { center, radius, angle, axis, points }
}

pub const NOISELESS_RADII: [f64; 5] = [0.05, 0.1, 0.2, 0.35, 0.5];
pub const NOISELESS_ANGLES_DEG: [f64; 7] = [30.0, 60.0, 90.0, 135.0, 180.0, 240.0, 300.0];

/// Focal length and depth at which 2 px of image noise is converted to meters.
pub const NOISE_FX: f64 = 500.0;
pub const NOISE_DEPTH: f64 = 1.0;
pub const NOISE_PX: f64 = 2.0;

pub struct RotationRegression {
    pub fits: usize,
    pub rejected: usize,
    pub mean_error: f64,
    pub median_error: f64,
    pub max_error: f64,
}

/// Pinned statistics of the seeded noisy ensemble: 500 arcs, radius
/// 0.05-0.5 m, angle 30-300°, 60 samples each.
pub const REGRESSION_SEED: u64 = 7;
pub const REGRESSION_ARCS: usize = 500;
pub const BOUND_MEAN_CENTER_ERROR: f64 = 0.015;
pub const BOUND_MEDIAN_CENTER_ERROR: f64 = 0.003;
pub const BOUND_MAX_CENTER_ERROR: f64 = 0.25;
pub const BOUND_REJECTED_FRACTION: f64 = 0.01;

pub fn rotation_regression() -> RotationRegression {
    let mut rng = StdRng::seed_from_u64(REGRESSION_SEED);
    let sigma = NOISE_PX * NOISE_DEPTH / NOISE_FX;
    let mut errors = Vec::new();
    let mut rejected = 0;
    for _ in 0..REGRESSION_ARCS {
        let radius = rng.random_range(0.05..=0.5);
        let angle = rng.random_range(30f64..=300.0).to_radians();
        let a = arc(&mut rng, Vec3::new(0.1, -0.05, NOISE_DEPTH), radius, angle, 60, sigma);
        match demo2plan::affordance::fit_rotation(&a.points, 1e-3) {
            Ok(f) => errors.push((f.center - a.center).norm()),
            Err(_) => rejected += 1,
        }
    }
    errors.sort_by(f64::total_cmp);
    RotationRegression {
        fits: errors.len(),
        rejected,
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        median_error: errors[errors.len() / 2],
        max_error: *errors.last().unwrap(),
    }
}

pub fn random_polyline(rng: &mut StdRng) -> Vec<Vec3> {
    let n = rng.random_range(2..60);
    let mut p = Vec3::zeros();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        p += Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        out.push(p);
    }
    out
}

/// Perpendicular distance by the cross-product area when the foot falls on
/// the segment, else the nearer endpoint.
fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    if ab.norm() == 0.0 {
        return (p - a).norm();
    }
    let inside = (p - a).dot(&ab) >= 0.0 && (p - b).dot(&-ab) >= 0.0;
    if inside {
        ab.cross(&(p - a)).norm() / ab.norm()
    } else {
        (p - a).norm().min((p - b).norm())
    }
}

/// Largest distance from any original point to the simplified segment that spans it.
pub fn max_deviation(points: &[Vec3], keep: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for w in keep.windows(2) {
        for p in &points[w[0]..=w[1]] {
            worst = worst.max(segment_distance(p, &points[w[0]], &points[w[1]]));
        }
    }
    worst
}

/// Code maximizing the dot product with `v`, by exhaustive enumeration; ties
/// keep the earlier code.
pub fn exhaustive_quantize(v: &Vec3) -> [i8; 3] {
    let mut best = codebook()[0];
    let mut best_dot = f64::NEG_INFINITY;
    for &c in codebook() {
        let d = code_vector(c).dot(v);
        if d > best_dot {
            best_dot = d;
            best = c;
        }
    }
    best
}

pub fn all_26_codes() -> Vec<[i8; 3]> {
    let mut out = Vec::new();
    for x in -1..=1i8 {
        for y in -1..=1i8 {
            for z in -1..=1i8 {
                if (x, y, z) != (0, 0, 0) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

// ---- metric ----

/// Edit distances for every pair of sequences of length <= `max_len` over an
/// alphabet of `k` symbols, computed from the recursive definition over
/// sequence tails. Sequences are numbered by length, then by base-`k` value
/// with the first symbol most significant.
pub struct DistanceTable {
    pub k: usize,
    pub max_len: usize,
    offsets: Vec<usize>,
    table: Vec<u8>,
    pub count: usize,
}

impl DistanceTable {
    pub fn build(k: usize, max_len: usize) -> Self {
        let mut offsets = vec![0];
        for len in 0..=max_len {
            offsets.push(offsets[len] + k.pow(len as u32));
        }
        let count = offsets[max_len + 1];
        let mut t = DistanceTable { k, max_len, offsets, table: vec![0; count * count], count };
        // fill in order of total length so all tails are ready
        for total in 0..=2 * max_len {
            for la in total.saturating_sub(max_len)..=total.min(max_len) {
                let lb = total - la;
                for a in t.offsets[la]..t.offsets[la + 1] {
                    for b in t.offsets[lb]..t.offsets[lb + 1] {
                        let d = if la == 0 {
                            lb
                        } else if lb == 0 {
                            la
                        } else {
                            let (ha, ta) = t.split(a);
                            let (hb, tb) = t.split(b);
                            let del = t.get(ta, b) as usize + 1;
                            let ins = t.get(a, tb) as usize + 1;
                            let sub = t.get(ta, tb) as usize + usize::from(ha != hb);
                            del.min(ins).min(sub)
                        };
                        t.table[a * count + b] = d as u8;
                    }
                }
            }
        }
        t
    }

    pub fn len_of(&self, id: usize) -> usize {
        self.offsets.iter().rposition(|&o| o <= id).unwrap()
    }

    pub fn get(&self, a: usize, b: usize) -> u8 {
        self.table[a * self.count + b]
    }

    /// First symbol and the id of the tail.
    fn split(&self, id: usize) -> (usize, usize) {
        let len = self.len_of(id);
        let value = id - self.offsets[len];
        let place = self.k.pow(len as u32 - 1);
        (value / place, self.offsets[len - 1] + value % place)
    }

    pub fn sequence(&self, id: usize) -> Vec<u8> {
        let len = self.len_of(id);
        let mut value = id - self.offsets[len];
        let mut out = vec![0u8; len];
        for slot in out.iter_mut().rev() {
            *slot = (value % self.k) as u8;
            value /= self.k;
        }
        out
    }
}

// ---- plans ----

pub fn kitchen_scene() -> SceneDescription {
    let obj = |name: &str, graspable| SceneObject { name: name.into(), graspable };
    SceneDescription {
        objects: vec![
            obj("juice", true),
            obj("cup", true),
            obj("sponge", true),
            obj("drawer", true),
            obj("fridge door", true),
            obj("faucet", true),
            obj("top shelf", false),
            obj("bottom shelf", false),
            obj("table", false),
            obj("sink", false),
        ],
        relations: vec![
            Relation { subject: "juice".into(), relation: "on".into(), object: "bottom shelf".into() },
            Relation { subject: "cup".into(), relation: "on".into(), object: "table".into() },
            Relation { subject: "sponge".into(), relation: "in".into(), object: "sink".into() },
        ],
        rationale: String::new(),
    }
}

pub struct LabeledPlan {
    pub name: &'static str,
    pub steps: &'static [&'static str],
    /// Index of the first violating step, or `None` for a valid plan.
    pub first_violation: Option<usize>,
}

const fn ok(name: &'static str, steps: &'static [&'static str]) -> LabeledPlan {
    LabeledPlan { name, steps, first_violation: None }
}

const fn bad(name: &'static str, steps: &'static [&'static str], at: usize) -> LabeledPlan {
    LabeledPlan { name, steps, first_violation: Some(at) }
}

pub const PLAN_CORPUS: &[LabeledPlan] = &[
    ok("relocate juice", &["MoveHand(juice)", "Grab(juice)", "PickUp(juice)", "MoveHand(top shelf)", "Put(juice, top shelf)", "Release(juice)"]),
    ok("grab and release", &["Grab(cup)", "Release(cup)"]),
    ok("open drawer", &["MoveHand(drawer)", "Grab(drawer)", "Slide(drawer)", "Release(drawer)"]),
    ok("open and close drawer", &["Grab(drawer)", "Slide(drawer)", "Slide(drawer)", "Release(drawer)"]),
    ok("open fridge", &["MoveHand(fridge door)", "Grab(fridge door)", "Rotate(fridge door)", "Release(fridge door)"]),
    ok("turn faucet", &["Grab(faucet)", "Rotate(faucet)", "Release(faucet)"]),
    ok("wipe table", &["Grab(sponge)", "PickUp(sponge)", "MoveHand(table)", "MoveOnSurface(sponge)", "Put(sponge, sink)", "Release(sponge)"]),
    ok("two objects in sequence", &["Grab(cup)", "PickUp(cup)", "Put(cup, sink)", "Release(cup)", "Grab(juice)", "PickUp(juice)", "Put(juice, table)", "Release(juice)"]),
    ok("move hand only", &["MoveHand(table)", "MoveHand(sink)"]),
    ok("empty plan", &[]),
    ok("case-insensitive names", &["Grab(Juice)", "PickUp(JUICE)", "Put(juice, Top Shelf)", "Release(juice)"]),
    ok("put without pickup", &["Grab(cup)", "Put(cup, top shelf)", "Release(cup)"]),
    ok("regrasp", &["Grab(cup)", "Release(cup)", "Grab(cup)", "PickUp(cup)", "Release(cup)"]),
    ok("carry and wipe", &["Grab(sponge)", "PickUp(sponge)", "MoveOnSurface(sponge)", "MoveOnSurface(sponge)", "Release(sponge)"]),
    ok("close fridge after juice", &["Grab(fridge door)", "Rotate(fridge door)", "Release(fridge door)", "Grab(juice)", "PickUp(juice)", "Put(juice, table)", "Release(juice)", "Grab(fridge door)", "Rotate(fridge door)", "Release(fridge door)"]),
    ok("holding at end", &["Grab(cup)", "PickUp(cup)"]),
    bad("release without grab", &["Release(cup)"], 0),
    bad("pickup without grab", &["PickUp(juice)"], 0),
    bad("double grab", &["Grab(cup)", "Grab(juice)"], 1),
    bad("put unheld object", &["Grab(cup)", "Put(juice, table)"], 1),
    bad("rotate unheld", &["Rotate(faucet)"], 0),
    bad("slide unheld", &["MoveHand(drawer)", "Slide(drawer)"], 1),
    bad("surface move unheld", &["MoveOnSurface(sponge)"], 0),
    bad("release wrong object", &["Grab(cup)", "Release(juice)"], 1),
    bad("unknown object", &["Grab(banana)"], 0),
    bad("unknown destination", &["Grab(cup)", "Put(cup, counter)"], 1),
    bad("unknown movehand target", &["MoveHand(garage)"], 0),
    bad("act after release", &["Grab(cup)", "Release(cup)", "PickUp(cup)"], 2),
    bad("grab while still holding", &["Grab(juice)", "PickUp(juice)", "Put(juice, top shelf)", "Grab(cup)"], 3),
    bad("late violation", &["Grab(cup)", "PickUp(cup)", "Put(cup, sink)", "Release(cup)", "Rotate(faucet)"], 4),
    bad("slide after switching objects", &["Grab(drawer)", "Release(drawer)", "Grab(cup)", "Slide(drawer)"], 3),
    bad("release twice", &["Grab(sponge)", "Release(sponge)", "Release(sponge)"], 2),
];

pub fn parse_steps(steps: &[&str]) -> Vec<TaskStep> {
    steps.iter().map(|s| s.parse().unwrap()).collect()
}

const GRASPABLE: [&str; 6] = ["juice", "cup", "sponge", "drawer", "fridge door", "faucet"];
const SUPPORTS: [&str; 4] = ["top shelf", "bottom shelf", "table", "sink"];

/// A random valid plan over the kitchen scene: grab/manipulate/release groups.
pub fn random_valid_plan(rng: &mut StdRng) -> Vec<TaskStep> {
    let mut steps = Vec::new();
    let step = |action: ActionKind, args: &[&str]| TaskStep::new(action, args.iter().copied()).unwrap();
    for _ in 0..rng.random_range(0..5) {
        let o = GRASPABLE[rng.random_range(0..GRASPABLE.len())];
        if rng.random_bool(0.5) {
            steps.push(step(ActionKind::MoveHand, &[o]));
        }
        steps.push(step(ActionKind::Grab, &[o]));
        for _ in 0..rng.random_range(0..5) {
            let s = SUPPORTS[rng.random_range(0..SUPPORTS.len())];
            steps.push(match rng.random_range(0..6) {
                0 => step(ActionKind::PickUp, &[o]),
                1 => step(ActionKind::Put, &[o, s]),
                2 => step(ActionKind::Rotate, &[o]),
                3 => step(ActionKind::Slide, &[o]),
                4 => step(ActionKind::MoveOnSurface, &[o]),
                _ => step(ActionKind::MoveHand, &[s]),
            });
        }
        steps.push(step(ActionKind::Release, &[o]));
    }
    steps
}

// ---- grounding ----

pub const SCENARIO_TARGET: &str = "cup";
pub const SCENARIO_DISTRACTORS: [&str; 3] = ["plate", "sponge", "bowl"];
pub const MIN_DISTRACTOR_MARGIN_PX: f64 = 10.0;

pub fn scenario_plan() -> Vec<TaskStep> {
    parse_steps(&["Grab(cup)", "PickUp(cup)", "MoveHand(table)", "Put(cup, table)", "Release(cup)"])
}

/// Smallest gap, in pixels, between the mean true hand distance of any
/// distractor and of the target over `[start, end]`.
pub fn distractor_margin(syn: &SyntheticStream, start: usize, end: usize) -> f64 {
    let mean = |label: &str| {
        let obj = syn.truth.object_pixels(label).unwrap();
        let d: f64 = (start..=end)
            .map(|i| {
                let h = syn.truth.hand_pixels[i];
                ((h[0] - obj[i][0]).powi(2) + (h[1] - obj[i][1]).powi(2)).sqrt()
            })
            .sum();
        d / (end - start + 1) as f64
    };
    let target = mean(SCENARIO_TARGET);
    SCENARIO_DISTRACTORS.iter().map(|d| mean(d) - target).fold(f64::INFINITY, f64::min)
}

/// The first `count` seeded scenarios whose grasp clip has the required
/// distractor margin, plus the number of seeds examined.
pub fn margin_scenarios(count: usize, clip_length: usize) -> (Vec<SyntheticStream>, u64) {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let script = SyntheticScript::random_pick_and_place(seed, SCENARIO_TARGET, &SCENARIO_DISTRACTORS);
        let syn = synthesize_stream(&script).unwrap();
        seed += 1;
        let g = syn.truth.anchors[0].frame;
        let start = (g / clip_length) * clip_length;
        if distractor_margin(&syn, start, start + clip_length - 1) >= MIN_DISTRACTOR_MARGIN_PX {
            out.push(syn);
        }
        assert!(seed < 20 * count as u64, "too few scenarios meet the margin");
    }
    (out, seed)
}
