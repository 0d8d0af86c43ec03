//! One Monte Carlo trial: a GEF sample, its zeros in a disk around the
//! analysis grid, the potential on the grid and the fields derived from it.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{compute_r, convolve, potential_grid, GridField, GridShape, MollifierKernel, RadiusEnvelope};
use crate::gef::GefSample;
use crate::matching::{lattice_spacing, LatticeWindow};
use crate::metric::SpecialMetricView;
use crate::rng::derive_seed;
use crate::zeros::{find_zeros, ZeroSet};

/// Tag mixed into trial seeds of GEF samples.
pub const GEF_TAG: u64 = 0x0067_6566;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub seed: u64,
    /// Half-width of the square analysis window.
    pub window_half_width: f64,
    /// Extra margin of grid around the window.
    pub buffer: f64,
    pub spacing: f64,
    pub const_c: f64,
    pub kernel_radius: f64,
    pub truncation_tol: f64,
    pub threshold: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            window_half_width: 8.0 * lattice_spacing(),
            buffer: 3.0,
            spacing: 0.1,
            const_c: 16.0,
            kernel_radius: 1.0,
            truncation_tol: 1e-12,
            threshold: 5.0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_half_width", self.window_half_width),
            ("spacing", self.spacing),
            ("const_c", self.const_c),
            ("kernel_radius", self.kernel_radius),
            ("truncation_tol", self.truncation_tol),
            ("threshold", self.threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.buffer.is_finite() && self.buffer >= 0.0) {
            return Err(Error::InvalidArgument(format!("buffer must be nonnegative, got {}", self.buffer)));
        }
        if self.spacing >= self.kernel_radius {
            return Err(Error::InvalidArgument("grid spacing must be below the kernel radius".into()));
        }
        Ok(())
    }

    pub fn grid_half_width(&self) -> f64 {
        self.window_half_width + self.buffer
    }

    /// Radius of the disk whose zeros are computed: the grid's corners plus
    /// one kernel radius, so every zero that influences a grid value is known.
    pub fn zero_disk_radius(&self) -> f64 {
        self.grid_half_width() * std::f64::consts::SQRT_2 + self.kernel_radius
    }

    pub fn trial_seed(&self, trial: u64) -> u64 {
        derive_seed(self.seed, &[GEF_TAG, trial])
    }
}

/// Zeros of a sample in a disk. A root within the boundary gap of the circle
/// is a measure-zero event; the disk is then nudged outward and retried.
pub fn zeros_in_disk(sample: &GefSample, radius: f64) -> Result<ZeroSet> {
    let mut r = radius;
    for _ in 0..4 {
        match find_zeros(sample, r) {
            Err(Error::RootNearBoundary { .. }) => r += 1e-3,
            other => return other,
        }
    }
    find_zeros(sample, r)
}

/// Everything about one trial that does not depend on `const_c`.
pub struct FieldTrial {
    pub index: u64,
    pub sample: GefSample,
    pub zeros: ZeroSet,
    pub kernel: MollifierKernel,
    /// `phi` on the grid, with singular nodes patched.
    pub potential: GridField,
    /// Nodes where `phi` was `-inf` and got replaced.
    pub patched: usize,
    /// `|phi| * chi`.
    pub smoothed_abs: GridField,
}

/// The `const_c`-dependent layer: `R` and the metric built from it.
pub struct MetricLayer {
    pub const_c: f64,
    pub envelope: RadiusEnvelope,
    pub metric: SpecialMetricView,
}

impl FieldTrial {
    pub fn build(config: &TrialConfig, trial: u64) -> Result<Self> {
        config.validate()?;
        let disk = config.zero_disk_radius();
        let sample = GefSample::new(config.trial_seed(trial), disk + 3.0, config.truncation_tol)?;
        let zeros = zeros_in_disk(&sample, disk)?;
        let shape = GridShape::centered(config.grid_half_width(), config.spacing);
        let kernel = MollifierKernel::new(config.kernel_radius, config.spacing)?;
        let mut potential = potential_grid(&sample, &shape);
        let patched = potential.patch_singular();
        let smoothed_abs = convolve(&potential.map(f64::abs), &kernel)?;
        Ok(Self {
            index: trial,
            sample,
            zeros,
            kernel,
            potential,
            patched,
            smoothed_abs,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.potential.shape
    }

    pub fn metric_layer(&self, const_c: f64) -> Result<MetricLayer> {
        let envelope = RadiusEnvelope::new(&self.smoothed_abs, const_c)?;
        let metric = SpecialMetricView::new(envelope.to_field())?;
        Ok(MetricLayer {
            const_c,
            envelope,
            metric,
        })
    }

    /// Zeros inside the square of the given half-width.
    pub fn zeros_in_square(&self, half_width: f64) -> Vec<Complex<f64>> {
        self.zeros
            .points
            .iter()
            .copied()
            .filter(|z| z.re.abs() <= half_width && z.im.abs() <= half_width)
            .collect()
    }
}

impl MetricLayer {
    /// Half-width of the square on which `R` and the metric are defined.
    pub fn domain_half_width(&self) -> f64 {
        let shape = self.metric.shape();
        let v = self.metric.valid();
        let lo = shape.point(v.x0, v.y0);
        let hi = shape.point(v.x1 - 1, v.y1 - 1);
        (-lo.re).min(-lo.im).min(hi.re).min(hi.im)
    }

    /// Lattice over the metric's domain; interior points keep a distance of
    /// at least `max(3 sqrt(pi), max R)` from the domain's edge.
    pub fn lattice(&self) -> LatticeWindow {
        let half = self.domain_half_width();
        let probe = LatticeWindow::new(half, 0.0);
        let max_r = probe
            .points
            .iter()
            .map(|p| self.envelope.value_at(p.position))
            .fold(0.0, f64::max);
        LatticeWindow::new(half, (3.0 * lattice_spacing()).max(max_r))
    }

    pub fn r_field(&self) -> &GridField {
        self.metric.r_field()
    }
}

/// `R` on the grid for one trial, without building the metric.
pub fn r_field(trial: &FieldTrial, const_c: f64) -> Result<GridField> {
    compute_r(&trial.smoothed_abs, const_c)
}
