//! Synthetic birefringent phantoms built from stacked retarder-film shards.
//!
//! Shards are convex polygons in pixel coordinates. A pixel is covered by a
//! shard when its centre lies inside (or on the edge of) the polygon. Each
//! covering shard contributes one film layer: its retarder matrix, its
//! absorption and one layer of optical delay d·(n − 1).

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{compose, retarder, JonesMatrix};

fn default_delta() -> f64 {
    PI
}

/// Film properties shared by every layer of a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilmParams {
    /// Layer thickness d in micrometers.
    pub layer_thickness_um: f64,
    /// Refractive index n of the film.
    pub layer_index: f64,
}

impl Default for FilmParams {
    fn default() -> Self {
        Self {
            layer_thickness_um: 60.0,
            layer_index: 1.5,
        }
    }
}

impl FilmParams {
    /// Extra optical path of one layer, d·(n − 1), in millimeters.
    pub fn layer_delay_mm(&self) -> f64 {
        self.layer_thickness_um * (self.layer_index - 1.0) * 1e-3
    }

    fn validate(&self) -> Result<()> {
        if !(self.layer_thickness_um.is_finite() && self.layer_thickness_um >= 0.0) {
            return Err(Error::domain("layer thickness must be non-negative"));
        }
        if !(self.layer_index.is_finite() && self.layer_index >= 1.0) {
            return Err(Error::domain("layer refractive index must be at least 1"));
        }
        Ok(())
    }
}

/// One convex piece of retarder film.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    /// Fast-axis angle in radians.
    pub theta: f64,
    /// Retardance in radians.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Absorption (single-photon loss) of this layer.
    #[serde(default)]
    pub gamma: f64,
    /// Polygon vertices `[x, y]` in pixel units, in either winding order.
    pub vertices: Vec<[f64; 2]>,
}

impl Shard {
    /// Axis-aligned rectangle shard.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, theta: f64, delta: f64, gamma: f64) -> Self {
        Self {
            theta,
            delta,
            gamma,
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::domain("shard polygon needs at least three vertices"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::domain(format!("shard absorption must lie in [0, 1), got {}", self.gamma)));
        }
        if !self.vertices.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::domain("shard vertices must be finite"));
        }
        retarder(self.theta, self.delta)?;
        let mut sign = 0.0f64;
        for (a, b, c) in self.edges_with_next() {
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross != 0.0 {
                if sign * cross < 0.0 {
                    return Err(Error::domain("shard polygon must be convex"));
                }
                sign = cross;
            }
        }
        Ok(())
    }

    fn edges_with_next(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]))
    }

    /// Whether the point lies inside the polygon or on its boundary.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        let (mut pos, mut neg) = (false, false);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
            pos |= cross > 0.0;
            neg |= cross < 0.0;
            if pos && neg {
                return false;
            }
        }
        true
    }

    pub fn jones(&self) -> Result<JonesMatrix> {
        retarder(self.theta, self.delta)
    }
}

/// Replaces whatever shards cover a pixel with a single explicit retarder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelOverride {
    pub x: usize,
    pub y: usize,
    pub theta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub layer_count: u32,
}

fn one() -> u32 {
    1
}

/// Ground-truth optics at one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelTruth {
    /// Fast-axis angle. For a single layer this is the shard's own angle; for
    /// stacks it is the effective half-wave angle θ_eff ∈ [0, π/4] with
    /// cos²2θ_eff = |⟨H|J|H⟩|², and `delta` is then reported as π.
    pub theta: f64,
    pub delta: f64,
    pub layer_count: u32,
    pub layer_thickness_um: f64,
    pub layer_index: f64,
    /// Combined absorption 1 − Π(1 − γₖ) of the covering layers.
    pub gamma_local: f64,
}

impl PixelTruth {
    /// layer_count·d·(n − 1) in millimeters.
    pub fn delay_shift_mm(&self) -> f64 {
        self.layer_count as f64 * self.layer_thickness_um * (self.layer_index - 1.0) * 1e-3
    }
}

/// A rasterized phantom: shard list plus per-pixel truth and Jones matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGrid {
    width: usize,
    height: usize,
    pixel_pitch_um: f64,
    film: FilmParams,
    shards: Vec<Shard>,
    overrides: Vec<PixelOverride>,
    pixels: Vec<PixelTruth>,
    jones: Vec<JonesMatrix>,
}

impl PhantomGrid {
    /// Rasterizes `shards` (stacked in list order) onto a `width × height`
    /// grid and applies `overrides` on top.
    pub fn new(
        width: usize,
        height: usize,
        pixel_pitch_um: f64,
        film: FilmParams,
        shards: Vec<Shard>,
        overrides: Vec<PixelOverride>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("phantom grid must have positive dimensions"));
        }
        if !(pixel_pitch_um.is_finite() && pixel_pitch_um > 0.0) {
            return Err(Error::domain("pixel pitch must be positive"));
        }
        film.validate()?;
        for shard in &shards {
            shard.validate()?;
        }
        let shard_jones = shards.iter().map(Shard::jones).collect::<Result<Vec<_>>>()?;

        let mut pixels = Vec::with_capacity(width * height);
        let mut jones = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let covering: Vec<usize> = (0..shards.len()).filter(|&i| shards[i].contains(cx, cy)).collect();
                let (j, theta, delta) = match covering.as_slice() {
                    [] => (JonesMatrix::identity(), 0.0, 0.0),
                    [only] => (shard_jones[*only], shards[*only].theta, shards[*only].delta),
                    many => {
                        let stack: Vec<JonesMatrix> = many.iter().map(|&i| shard_jones[i]).collect();
                        let j = compose(&stack)?;
                        (j, j.effective_axis_angle(), PI)
                    }
                };
                let transmission: f64 = covering.iter().map(|&i| 1.0 - shards[i].gamma).product();
                pixels.push(PixelTruth {
                    theta,
                    delta,
                    layer_count: covering.len() as u32,
                    layer_thickness_um: film.layer_thickness_um,
                    layer_index: film.layer_index,
                    gamma_local: 1.0 - transmission,
                });
                jones.push(j);
            }
        }

        for ov in &overrides {
            if ov.x >= width || ov.y >= height {
                return Err(Error::domain(format!("override at ({}, {}) is outside the grid", ov.x, ov.y)));
            }
            if !(0.0..1.0).contains(&ov.gamma) {
                return Err(Error::domain("override absorption must lie in [0, 1)"));
            }
            let idx = ov.y * width + ov.x;
            jones[idx] = retarder(ov.theta, ov.delta)?;
            pixels[idx] = PixelTruth {
                theta: ov.theta,
                delta: ov.delta,
                layer_count: ov.layer_count,
                layer_thickness_um: film.layer_thickness_um,
                layer_index: film.layer_index,
                gamma_local: ov.gamma,
            };
        }

        Ok(Self {
            width,
            height,
            pixel_pitch_um,
            film,
            shards,
            overrides,
            pixels,
            jones,
        })
    }

    /// A grid with no shards: identity optics everywhere.
    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, 10.0, FilmParams::default(), Vec::new(), Vec::new())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch_um(&self) -> f64 {
        self.pixel_pitch_um
    }

    pub fn film(&self) -> FilmParams {
        self.film
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn overrides(&self) -> &[PixelOverride] {
        &self.overrides
    }

    pub fn pixels(&self) -> &[PixelTruth] {
        &self.pixels
    }

    fn index(&self, x: usize, y: usize) -> Result<usize> {
        if x >= self.width || y >= self.height {
            return Err(Error::domain(format!(
                "pixel ({x}, {y}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(y * self.width + x)
    }

    pub fn pixel(&self, x: usize, y: usize) -> Result<&PixelTruth> {
        Ok(&self.pixels[self.index(x, y)?])
    }

    /// Jones matrix of the shard stack covering the pixel.
    pub fn pixel_jones(&self, x: usize, y: usize) -> Result<JonesMatrix> {
        Ok(self.jones[self.index(x, y)?])
    }

    /// Optical delay added by the covering layers, in millimeters.
    pub fn pixel_delay_shift(&self, x: usize, y: usize) -> Result<f64> {
        Ok(self.pixel(x, y)?.delay_shift_mm())
    }

    /// Effective half-wave angle θ_eff ∈ [0, π/4] seen by the interferometer.
    pub fn effective_theta(&self, x: usize, y: usize) -> Result<f64> {
        Ok(self.pixel_jones(x, y)?.effective_axis_angle())
    }

    /// Writes the fixture file (TOML).
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_fixture_string()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_fixture_str(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn to_fixture_string(&self) -> Result<String> {
        let file = PhantomFile {
            grid: GridHeader {
                width: self.width,
                height: self.height,
                pixel_pitch_um: self.pixel_pitch_um,
                layer_thickness_um: self.film.layer_thickness_um,
                layer_index: self.film.layer_index,
            },
            shard: self.shards.clone(),
            pixel_override: self.overrides.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Numerical(format!("cannot serialize phantom: {e}")))
    }

    pub fn from_fixture_str(text: &str) -> Result<Self> {
        let file: PhantomFile = toml::from_str(text).map_err(|e| Error::Format {
            path: "<phantom>".into(),
            message: e.to_string(),
        })?;
        let g = file.grid;
        Self::new(
            g.width,
            g.height,
            g.pixel_pitch_um,
            FilmParams {
                layer_thickness_um: g.layer_thickness_um,
                layer_index: g.layer_index,
            },
            file.shard,
            file.pixel_override,
        )
    }
}

/// On-disk phantom fixture.
///
/// ```toml
/// [grid]
/// width = 32
/// height = 32
/// pixel_pitch_um = 10.0
/// layer_thickness_um = 60.0
/// layer_index = 1.5
///
/// [[shard]]
/// theta = 0.3
/// delta = 3.141592653589793
/// gamma = 0.1
/// vertices = [[1.0, 1.0], [20.0, 2.0], [12.0, 18.0]]
///
/// [[pixel_override]]
/// x = 0
/// y = 0
/// theta = 0.1
/// ```
#[derive(Debug, Serialize, Deserialize)]
struct PhantomFile {
    grid: GridHeader,
    #[serde(default)]
    shard: Vec<Shard>,
    #[serde(default)]
    pixel_override: Vec<PixelOverride>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    width: usize,
    height: usize,
    pixel_pitch_um: f64,
    #[serde(default = "default_thickness")]
    layer_thickness_um: f64,
    #[serde(default = "default_index")]
    layer_index: f64,
}

fn default_thickness() -> f64 {
    FilmParams::default().layer_thickness_um
}

fn default_index() -> f64 {
    FilmParams::default().layer_index
}

/// How shard fast-axis angles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSampler {
    Uniform { min: f64, max: f64 },
    Fixed { theta: f64 },
}

impl Default for AngleSampler {
    fn default() -> Self {
        AngleSampler::Uniform {
            min: 0.0,
            max: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl AngleSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            AngleSampler::Uniform { min, max } if max > min => rng.random_range(min..max),
            AngleSampler::Uniform { min, .. } => min,
            AngleSampler::Fixed { theta } => theta,
        }
    }
}

/// Parameters of the random shard generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShardGenerator {
    pub width: usize,
    pub height: usize,
    pub n_shards: usize,
    pub angle: AngleSampler,
    pub delta: f64,
    /// Shard absorption is drawn uniformly from [0, gamma_max].
    pub gamma_max: f64,
    /// Shard semi-axes, as fractions of the smaller grid dimension.
    pub min_radius: f64,
    pub max_radius: f64,
    pub pixel_pitch_um: f64,
    pub layer_thickness_um: f64,
    pub layer_index: f64,
}

impl Default for ShardGenerator {
    fn default() -> Self {
        let film = FilmParams::default();
        Self {
            width: 32,
            height: 32,
            n_shards: 8,
            angle: AngleSampler::default(),
            delta: PI,
            gamma_max: 0.0,
            min_radius: 0.15,
            max_radius: 0.4,
            pixel_pitch_um: 10.0,
            layer_thickness_um: film.layer_thickness_um,
            layer_index: film.layer_index,
        }
    }
}

/// Generates a phantom of `params.n_shards` random convex shards.
///
/// Each shard is an ellipse-inscribed polygon (3 to 8 vertices at sorted
/// random polar angles) with a random centre, semi-axes and orientation, a
/// fast axis from `params.angle` and absorption uniform in [0, gamma_max].
pub fn generate_shards(seed: u64, params: &ShardGenerator) -> Result<PhantomGrid> {
    if !(0.0..1.0).contains(&params.gamma_max) {
        return Err(Error::domain("gamma_max must lie in [0, 1)"));
    }
    if !(params.min_radius > 0.0 && params.max_radius >= params.min_radius) {
        return Err(Error::domain("shard radii must satisfy 0 < min_radius <= max_radius"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width as f64, params.height as f64);
    let scale = w.min(h);

    let mut shards = Vec::with_capacity(params.n_shards);
    for _ in 0..params.n_shards {
        let cx = rng.random_range(0.0..w.max(f64::MIN_POSITIVE));
        let cy = rng.random_range(0.0..h.max(f64::MIN_POSITIVE));
        let mut axis = || {
            if params.max_radius > params.min_radius {
                rng.random_range(params.min_radius..params.max_radius) * scale
            } else {
                params.min_radius * scale
            }
        };
        let (a, b) = (axis(), axis());
        let tilt: f64 = rng.random_range(0.0..PI);
        let k = rng.random_range(3..=8usize);
        let mut phis: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..TAU)).collect();
        phis.sort_by(f64::total_cmp);
        let (st, ct) = tilt.sin_cos();
        let vertices = phis
            .iter()
            .map(|phi| {
                let (u, v) = (a * phi.cos(), b * phi.sin());
                [cx + u * ct - v * st, cy + u * st + v * ct]
            })
            .collect();
        let theta = params.angle.sample(&mut rng);
        let gamma = if params.gamma_max > 0.0 {
            rng.random_range(0.0..params.gamma_max)
        } else {
            0.0
        };
        shards.push(Shard {
            theta,
            delta: params.delta,
            gamma,
            vertices,
        });
    }

    PhantomGrid::new(
        params.width,
        params.height,
        params.pixel_pitch_um,
        FilmParams {
            layer_thickness_um: params.layer_thickness_um,
            layer_index: params.layer_index,
        },
        shards,
        Vec::new(),
    )
}
