//! Seeded procedural street scenes with exact depth and labels, for tests,
//! demos and density-model training when no real dataset is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{depth_to_disparity, CameraModel, DepthMap, DisparityMap, ImageRgb, SemanticLabeling, MISSING};

// Cityscapes trainIds
pub const ROAD: u32 = 0;
pub const SIDEWALK: u32 = 1;
pub const BUILDING: u32 = 2;
pub const VEGETATION: u32 = 8;
pub const SKY: u32 = 10;
pub const CAR: u32 = 13;

/// Depth assigned to the sky, meters.
pub const SKY_DEPTH: f64 = 2000.0;
const CAMERA_HEIGHT: f64 = 1.2;

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub clear: ImageRgb,
    /// Exact planar z-depth.
    pub depth: DepthMap,
    /// Disparity of `depth` with a sprinkling of missing pixels.
    pub disparity: DisparityMap,
    pub labels: SemanticLabeling,
    pub camera: CameraModel,
}

/// Cityscapes-like focal length for an image of the given width.
pub fn camera_for_width(width: usize) -> CameraModel {
    CameraModel { baseline: 0.209313, focal_length: 1.1 * width as f64 }
}

/// Fronto-parallel box standing on the ground, in world meters.
struct Object {
    label: u32,
    z: f64,
    x0: f64,
    x1: f64,
    height: f64,
    color: [f64; 3],
}

/// Facade parallel to the optical axis at lateral offset `side * offset`.
struct Facade {
    offset: f64,
    z0: f64,
    z1: f64,
    height: f64,
    color: [f64; 3],
    period: f64,
}

/// Street canyon: ground plane, a facade on each side, a distant backdrop,
/// parked cars and trees. Each pixel takes the nearest surface along its ray.
pub fn street_scene(seed: u64, width: usize, height: usize) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = camera_for_width(width);
    let f = cam.focal_length;
    let (w, h) = (width, height);
    let cx = (w as f64 - 1.0) / 2.0;
    let horizon = h as f64 * rng.gen_range(0.35..0.5);
    let sky_top: [f64; 3] = [rng.gen_range(0.55..0.75), rng.gen_range(0.65..0.85), rng.gen_range(0.8..0.98)];
    let road_gray = rng.gen_range(0.2..0.4);
    let walk_gray = rng.gen_range(0.45..0.6);
    let road_half = rng.gen_range(3.5..7.0);
    let road_center = rng.gen_range(-1.5..1.5);

    let gray = |rng: &mut ChaCha8Rng| {
        let g = rng.gen_range(0.3..0.75);
        [g * rng.gen_range(0.85..1.1), g, g * rng.gen_range(0.8..1.05)]
    };
    let facade = |rng: &mut ChaCha8Rng, side: f64| Facade {
        offset: side * (road_half + rng.gen_range(2.5..6.0)),
        z0: rng.gen_range(3.0..15.0),
        z1: rng.gen_range(60.0..250.0),
        height: rng.gen_range(8.0..25.0),
        color: gray(rng),
        period: rng.gen_range(2.5..4.0),
    };
    let facades = [facade(&mut rng, -1.0), facade(&mut rng, 1.0)];
    let backdrop_z = rng.gen_range(250.0..600.0);
    let backdrop_height = rng.gen_range(5.0..40.0);
    let backdrop_color = gray(&mut rng);

    let mut objects = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let lane = road_center + rng.gen_range(-road_half..road_half - 1.8);
        let color = [rng.gen(), rng.gen(), rng.gen()];
        objects.push(Object { label: CAR, z: rng.gen_range(6.0..40.0), x0: lane, x1: lane + 1.8, height: 1.5, color });
    }
    for _ in 0..rng.gen_range(0..4) {
        let side = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        let x = road_center + side * (road_half + rng.gen_range(0.5..2.0));
        let color = [rng.gen_range(0.1..0.3), rng.gen_range(0.3..0.55), rng.gen_range(0.05..0.2)];
        let half = rng.gen_range(1.0..3.0);
        objects.push(Object { label: VEGETATION, z: rng.gen_range(8.0..80.0), x0: x - half, x1: x + half, height: rng.gen_range(4.0..10.0), color });
    }

    let mut z = vec![0.0; w * h];
    let mut rgb = vec![[0.0; 3]; w * h];
    let mut label = vec![0; w * h];
    for y in 0..h {
        // height of the ray above ground per meter of depth, relative to the camera
        let v = (horizon - (y as f64 + 0.5)) / f;
        for x in 0..w {
            let u = (x as f64 - cx) / f;
            let i = y * w + x;
            let sky_shade = (y as f64 / horizon).min(1.0);
            let (mut best, mut color, mut lab) = (SKY_DEPTH, sky_top.map(|c| (c + 0.12 * sky_shade).min(1.0)), SKY);
            let mut consider = |zz: f64, c: [f64; 3], l: u32| {
                if zz > 0.0 && zz < best {
                    best = zz;
                    color = c;
                    lab = l;
                }
            };
            let above = |zz: f64| CAMERA_HEIGHT + v * zz;
            if v < 0.0 {
                let zg = (CAMERA_HEIGHT / -v).min(SKY_DEPTH * 0.5);
                let on_road = (u * zg - road_center).abs() < road_half;
                let g = if on_road { road_gray } else { walk_gray };
                consider(zg, [g, g, g * 1.03], if on_road { ROAD } else { SIDEWALK });
            }
            for fa in &facades {
                if u != 0.0 && fa.offset / u > 0.0 {
                    let zf = fa.offset / u;
                    let hgt = above(zf);
                    if (fa.z0..=fa.z1).contains(&zf) && (0.0..=fa.height).contains(&hgt) {
                        // windows in world units
                        let window = (zf / fa.period).fract() < 0.4 && (hgt / 3.0).fract() > 0.4;
                        consider(zf, fa.color.map(|c| if window { c * 0.55 } else { c }), BUILDING);
                    }
                }
            }
            if (0.0..=backdrop_height).contains(&above(backdrop_z)) {
                consider(backdrop_z, backdrop_color, BUILDING);
            }
            for o in &objects {
                if (o.x0..=o.x1).contains(&(u * o.z)) && (0.0..=o.height).contains(&above(o.z)) {
                    consider(o.z, o.color, o.label);
                }
            }
            z[i] = best;
            rgb[i] = color;
            label[i] = lab;
        }
    }

    let clear = ImageRgb::from_fn(w, h, |x, y| {
        let n = rng.gen_range(-0.03..0.03);
        rgb[y * w + x].map(|v| (v + n).clamp(0.0, 1.0))
    });
    let depth = DepthMap::new(w, h, z).expect("depths are positive and finite");
    let mut disparity = depth_to_disparity(&depth, &cam).into_data();
    for v in disparity.iter_mut() {
        if rng.gen_bool(0.02) {
            *v = MISSING;
        }
    }
    SyntheticScene {
        clear,
        depth,
        disparity: DisparityMap::new(w, h, disparity).expect("valid disparities"),
        labels: SemanticLabeling::new(w, h, label).expect("matching size"),
        camera: cam,
    }
}
