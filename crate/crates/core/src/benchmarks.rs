//! Manufactured solutions for `-Δu = f` in Ω, `u = g` on ∂Ω.

use crate::geometry::RigidTransform;

/// Exponent of the corner singularity.
pub const FICHERA_ALPHA: f64 = 2.0 / 3.0;

/// Shock centers (3D; the 2D problem lives on the slice z = 0).
pub const SHOCK_CENTERS: [[f64; 3]; 3] = [[-1.0, -1.0, 1.0], [1.0, 1.0, -1.0], [0.5, -3.0, -3.0]];
pub const SHOCK_TAU: [f64; 3] = [60.0, 80.0, 120.0];
pub const SHOCK_R0: [f64; 3] = [2.5, 1.75, 4.5];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Benchmark {
    /// `u = r^α sin αθ` in the frame of a pacman with the given wedge, with θ
    /// measured counter-clockwise from the lower wedge edge.
    Fichera { wedge: f64, frame: RigidTransform },
    /// Sum of three arctan shocks of the distance to the 3D centers, at z = 0.
    Shock2d,
    /// `u = 2x - y + 3`.
    Affine,
}

impl Benchmark {
    pub fn fichera(wedge: f64) -> Self {
        Benchmark::Fichera { wedge, frame: RigidTransform::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Fichera { .. } => "fichera",
            Benchmark::Shock2d => "shock2d",
            Benchmark::Affine => "affine",
        }
    }

    fn polar(wedge: f64, frame: &RigidTransform, x: [f64; 2]) -> (f64, f64) {
        let p = frame.pull_back(x);
        let r = p[0].hypot(p[1]);
        let mut theta = p[1].atan2(p[0]);
        if theta < -0.5 * wedge {
            theta += 2.0 * std::f64::consts::PI;
        }
        (r, theta)
    }

    pub fn u(&self, x: [f64; 2]) -> f64 {
        match self {
            Benchmark::Fichera { wedge, frame } => {
                let (r, theta) = Self::polar(*wedge, frame, x);
                if r == 0.0 {
                    return 0.0;
                }
                r.powf(FICHERA_ALPHA) * (FICHERA_ALPHA * theta).sin()
            }
            Benchmark::Shock2d => (0..3)
                .map(|i| {
                    let c = SHOCK_CENTERS[i];
                    let r = (x[0] - c[0]).hypot(x[1] - c[1]).hypot(c[2]);
                    (SHOCK_TAU[i] * (r - SHOCK_R0[i])).atan()
                })
                .sum(),
            Benchmark::Affine => 2.0 * x[0] - x[1] + 3.0,
        }
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Benchmark::Fichera { wedge, frame } => {
                let (r, theta) = Self::polar(*wedge, frame, x);
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let a = FICHERA_ALPHA;
                let s = a * r.powf(a - 1.0);
                let local = [s * ((a - 1.0) * theta).sin(), s * ((a - 1.0) * theta).cos()];
                frame.push_vector(local)
            }
            Benchmark::Shock2d => {
                let mut g = [0.0, 0.0];
                for i in 0..3 {
                    let c = SHOCK_CENTERS[i];
                    let d = [x[0] - c[0], x[1] - c[1]];
                    let r = d[0].hypot(d[1]).hypot(c[2]);
                    let s = SHOCK_TAU[i] * (r - SHOCK_R0[i]);
                    let k = SHOCK_TAU[i] / (1.0 + s * s) / r;
                    g[0] += k * d[0];
                    g[1] += k * d[1];
                }
                g
            }
            Benchmark::Affine => [2.0, -1.0],
        }
    }

    /// Source term `f = -Δu`.
    pub fn f(&self, x: [f64; 2]) -> f64 {
        match self {
            Benchmark::Fichera { .. } | Benchmark::Affine => 0.0,
            Benchmark::Shock2d => {
                let mut lap = 0.0;
                for i in 0..3 {
                    let c = SHOCK_CENTERS[i];
                    let rho2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    let r = (rho2 + c[2] * c[2]).sqrt();
                    let tau = SHOCK_TAU[i];
                    let s = tau * (r - SHOCK_R0[i]);
                    let g = tau / (1.0 + s * s);
                    let dg = -2.0 * tau * tau * s / (1.0 + s * s).powi(2);
                    // div(g(r)/r · (x - c)) in the plane.
                    lap += 2.0 * g / r + (dg / r - g / (r * r)) * rho2 / r;
                }
                -lap
            }
        }
    }

    /// Dirichlet data.
    pub fn g(&self, x: [f64; 2]) -> f64 {
        self.u(x)
    }

    /// `‖u‖_a` over the pacman of radius `radius` (Fichera only).
    pub fn fichera_energy_norm(wedge: f64, radius: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI - wedge;
        (FICHERA_ALPHA * omega * radius.powf(2.0 * FICHERA_ALPHA) / 2.0).sqrt()
    }
}
