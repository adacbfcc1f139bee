//! Built-in benchmark systems. Each builder returns an `OdeSystem` with an
//! analytic Jacobian and the state domain its datasets are drawn from.

use crate::dynamics::{Domain, OdeSystem};
use crate::error::{Error, Result};
use rand::Rng;

/// Linear 2D system du1 = u1 - 4 u2 + 3, du2 = 4 u1 - 7 u2 + 3. The
/// coefficient matrix has the double eigenvalue -3; the fixed point is (1, 1).
pub fn linear() -> OdeSystem {
    let domain = Domain::new_box(vec![[0.0, 2.0], [0.0, 2.0]]).expect("static bounds");
    OdeSystem::new(
        "linear",
        2,
        domain,
        |u, out| {
            out[0] = u[0] - 4.0 * u[1] + 3.0;
            out[1] = 4.0 * u[0] - 7.0 * u[1] + 3.0;
        },
        |_, out| {
            out.set(0, 0, 1.0);
            out.set(0, 1, -4.0);
            out.set(1, 0, 4.0);
            out.set(1, 1, -7.0);
        },
    )
    .expect("static system")
}

/// Two-sided Lipschitz-type bound used by the error-propagation checks for
/// the linear system: the spectral norm of its (constant) Jacobian.
pub const LINEAR_LIPSCHITZ: f64 = 9.0;

/// Nonlinear planar system whose unit circle is a periodic attractor:
/// du1 = u2 - u1 (u1^2 + u2^2 - 1), du2 = -u1 - u2 (u1^2 + u2^2 - 1).
pub fn periodic_attractor() -> OdeSystem {
    let domain = Domain::new_box(vec![[-2.0, 2.0], [-2.0, 2.0]]).expect("static bounds");
    OdeSystem::new(
        "periodic_attractor",
        2,
        domain,
        |u, out| {
            let r = u[0] * u[0] + u[1] * u[1] - 1.0;
            out[0] = u[1] - u[0] * r;
            out[1] = -u[0] - u[1] * r;
        },
        |u, out| {
            let r = u[0] * u[0] + u[1] * u[1] - 1.0;
            out.set(0, 0, -r - 2.0 * u[0] * u[0]);
            out.set(0, 1, 1.0 - 2.0 * u[0] * u[1]);
            out.set(1, 0, -1.0 - 2.0 * u[0] * u[1]);
            out.set(1, 1, -r - 2.0 * u[1] * u[1]);
        },
    )
    .expect("static system")
}

const PENDULUM_ALPHA: f64 = 0.2;
const PENDULUM_BETA: f64 = 9.8;

/// Damped pendulum du1 = u2, du2 = -0.2 u2 - 9.8 sin(u1). The domain is the
/// sub-separatrix energy region |u2| <= min(2 pi, sqrt(2 * 9.8 (1 + cos u1))),
/// which the damped flow never leaves.
pub fn damped_pendulum() -> OdeSystem {
    let bound = |u1: f64| (2.0 * PENDULUM_BETA * (1.0 + u1.cos())).sqrt().min(2.0 * std::f64::consts::PI);
    let domain = Domain::new_box(vec![
        [-std::f64::consts::PI, std::f64::consts::PI],
        [-2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI],
    ])
    .expect("static bounds")
    .with_predicate(move |u| u[1].abs() <= bound(u[0]));
    OdeSystem::new(
        "damped_pendulum",
        2,
        domain,
        |u, out| {
            out[0] = u[1];
            out[1] = -PENDULUM_ALPHA * u[1] - PENDULUM_BETA * u[0].sin();
        },
        |u, out| {
            out.set(0, 0, 0.0);
            out.set(0, 1, 1.0);
            out.set(1, 0, -PENDULUM_BETA * u[0].cos());
            out.set(1, 1, -PENDULUM_ALPHA);
        },
    )
    .expect("static system")
}

/// Largest Jacobian spectral norm of the pendulum over its domain, attained
/// at cos(u1) = +-1: the 2x2 closed form of || [[0,1],[-9.8 c, -0.2]] ||_2
/// maximized over c in [-1, 1].
pub fn pendulum_lipschitz() -> f64 {
    let norm_at = |c: f64| {
        // Singular values of [[0,1],[b,a]] with b = -9.8c, a = -0.2.
        let b = -PENDULUM_BETA * c;
        let a = -PENDULUM_ALPHA;
        let q = 1.0 + a * a + b * b;
        let det = b * b; // squared determinant of the matrix
        (0.5 * (q + (q * q - 4.0 * det).sqrt())).sqrt()
    };
    norm_at(1.0).max(norm_at(-1.0))
}

const ROBERTSON_K1: f64 = 0.04;
const ROBERTSON_K2: f64 = 1.0e4;
const ROBERTSON_K3: f64 = 3.0e7;

/// Robertson chemical kinetics, the classic stiff three-species benchmark:
/// du1 = -k1 u1 + k2 u2 u3, du2 = k1 u1 - k2 u2 u3 - k3 u2^2, du3 = k3 u2^2
/// with k1 = 0.04, k2 = 1e4, k3 = 3e7. Initial states are sampled on the
/// mass simplex u1 + u2 + u3 = 1 inside the box [0,1] x [0,1e-4] x [0,1], so
/// every trajectory conserves total mass 1.
pub fn robertson() -> OdeSystem {
    let domain = Domain::new_box(vec![[0.0, 1.0], [0.0, 1.0e-4], [0.0, 1.0]])
        .expect("static bounds")
        .with_sampler(|rng| {
            // u1 uniform, u2 uniform on its thin slab, u3 the mass remainder;
            // redraw when the remainder leaves [0, 1].
            loop {
                let u1 = rng.gen_range(0.0..=1.0);
                let u2 = rng.gen_range(0.0..=1.0e-4);
                let u3 = 1.0 - u1 - u2;
                if (0.0..=1.0).contains(&u3) {
                    return vec![u1, u2, u3];
                }
            }
        });
    OdeSystem::new(
        "robertson",
        3,
        domain,
        |u, out| {
            let fast = ROBERTSON_K2 * u[1] * u[2];
            let quad = ROBERTSON_K3 * u[1] * u[1];
            out[0] = -ROBERTSON_K1 * u[0] + fast;
            out[1] = ROBERTSON_K1 * u[0] - fast - quad;
            out[2] = quad;
        },
        |u, out| {
            out.set(0, 0, -ROBERTSON_K1);
            out.set(0, 1, ROBERTSON_K2 * u[2]);
            out.set(0, 2, ROBERTSON_K2 * u[1]);
            out.set(1, 0, ROBERTSON_K1);
            out.set(1, 1, -ROBERTSON_K2 * u[2] - 2.0 * ROBERTSON_K3 * u[1]);
            out.set(1, 2, -ROBERTSON_K2 * u[1]);
            out.set(2, 0, 0.0);
            out.set(2, 1, 2.0 * ROBERTSON_K3 * u[1]);
            out.set(2, 2, 0.0);
        },
    )
    .expect("static system")
}

/// Seven-species glycolytic oscillator with the standard parameter set
/// (J0 = 2.5, k1..k6, kappa, psi, q, K1, N, A).
pub fn glycolytic() -> OdeSystem {
    const J0: f64 = 2.5;
    const K1R: f64 = 100.0;
    const K2: f64 = 6.0;
    const K3: f64 = 16.0;
    const K4: f64 = 100.0;
    const K5: f64 = 1.28;
    const K6: f64 = 12.0;
    const KOUT: f64 = 1.8;
    const KAPPA: f64 = 13.0;
    const Q: f64 = 4.0;
    const KI: f64 = 0.52;
    const PSI: f64 = 0.1;
    const N: f64 = 1.0;
    const A: f64 = 4.0;
    let domain = Domain::new_box(vec![
        [0.15, 1.6],
        [0.19, 2.16],
        [0.04, 0.2],
        [0.1, 0.35],
        [0.08, 0.3],
        [0.14, 2.67],
        [0.05, 0.1],
    ])
    .expect("static bounds");
    OdeSystem::new(
        "glycolytic",
        7,
        domain,
        |u, out| {
            let s = (u[5] / KI).powf(Q);
            let gate = 1.0 + s;
            let r1 = K1R * u[0] * u[5] / gate;
            out[0] = J0 - r1;
            out[1] = 2.0 * r1 - K2 * u[1] * (N - u[4]) - K6 * u[1] * u[4];
            out[2] = K2 * u[1] * (N - u[4]) - K3 * u[2] * (A - u[5]);
            out[3] = K3 * u[2] * (A - u[5]) - K4 * u[3] * u[4] - KAPPA * (u[3] - u[6]);
            out[4] = K2 * u[1] * (N - u[4]) - K4 * u[3] * u[4] - K6 * u[1] * u[4];
            out[5] = -2.0 * r1 + 2.0 * K3 * u[2] * (A - u[5]) - K5 * u[5];
            out[6] = PSI * KAPPA * (u[3] - u[6]) - KOUT * u[6];
        },
        |u, out| {
            let s = (u[5] / KI).powf(Q);
            let gate = 1.0 + s;
            // d/du6 of h(u6) = u6/(1+s(u6)) with s = (u6/K1)^q:
            // (1 + s - q s) / (1 + s)^2.
            let h = u[5] / gate;
            let dh = (1.0 + s - Q * s) / (gate * gate);
            // r1 = K1R * u1 * h(u6)
            let dr1_du1 = K1R * h;
            let dr1_du6 = K1R * u[0] * dh;
            for r in 0..7 {
                for c in 0..7 {
                    out.set(r, c, 0.0);
                }
            }
            out.set(0, 0, -dr1_du1);
            out.set(0, 5, -dr1_du6);

            out.set(1, 0, 2.0 * dr1_du1);
            out.set(1, 1, -K2 * (N - u[4]) - K6 * u[4]);
            out.set(1, 4, K2 * u[1] - K6 * u[1]);
            out.set(1, 5, 2.0 * dr1_du6);

            out.set(2, 1, K2 * (N - u[4]));
            out.set(2, 2, -K3 * (A - u[5]));
            out.set(2, 4, -K2 * u[1]);
            out.set(2, 5, K3 * u[2]);

            out.set(3, 2, K3 * (A - u[5]));
            out.set(3, 3, -K4 * u[4] - KAPPA);
            out.set(3, 4, -K4 * u[3]);
            out.set(3, 5, -K3 * u[2]);
            out.set(3, 6, KAPPA);

            out.set(4, 1, K2 * (N - u[4]) - K6 * u[4]);
            out.set(4, 3, -K4 * u[4]);
            out.set(4, 4, -K2 * u[1] - K4 * u[3] - K6 * u[1]);

            out.set(5, 0, -2.0 * dr1_du1);
            out.set(5, 2, 2.0 * K3 * (A - u[5]));
            out.set(5, 5, -2.0 * dr1_du6 - 2.0 * K3 * u[2] - K5);

            out.set(6, 3, PSI * KAPPA);
            out.set(6, 6, -PSI * KAPPA - KOUT);
        },
    )
    .expect("static system")
}

/// Sixteen-point method-of-lines discretization of the periodic heat
/// equation u_t = 0.1 u_xx on a unit ring: the nodal-state framing where grid
/// values form the state vector of an autonomous linear ODE system.
pub fn heat_rod_16() -> OdeSystem {
    const N: usize = 16;
    const KAPPA: f64 = 0.1;
    let h = 1.0 / N as f64;
    let w = KAPPA / (h * h);
    let domain = Domain::new_box(vec![[-1.0, 1.0]; N]).expect("static bounds");
    OdeSystem::new(
        "heat_rod_16",
        N,
        domain,
        move |u, out| {
            for i in 0..N {
                let left = u[(i + N - 1) % N];
                let right = u[(i + 1) % N];
                out[i] = w * (left - 2.0 * u[i] + right);
            }
        },
        move |_, out| {
            for i in 0..N {
                for j in 0..N {
                    out.set(i, j, 0.0);
                }
                out.set(i, i, -2.0 * w);
                out.set(i, (i + 1) % N, w);
                out.set(i, (i + N - 1) % N, w);
            }
        },
    )
    .expect("static system")
}

/// Looks up a built-in system by its registry name.
pub fn by_name(name: &str) -> Result<OdeSystem> {
    match name {
        "linear" => Ok(linear()),
        "periodic_attractor" => Ok(periodic_attractor()),
        "damped_pendulum" => Ok(damped_pendulum()),
        "robertson" => Ok(robertson()),
        "glycolytic" => Ok(glycolytic()),
        "heat_rod_16" => Ok(heat_rod_16()),
        other => Err(Error::Config(format!(
            "unknown system '{other}' (built-ins: linear, periodic_attractor, damped_pendulum, robertson, glycolytic, heat_rod_16)"
        ))),
    }
}

pub const SYSTEM_NAMES: [&str; 6] = [
    "linear",
    "periodic_attractor",
    "damped_pendulum",
    "robertson",
    "glycolytic",
    "heat_rod_16",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, rk4_evolve, stream_rng, Integrator};
    use crate::linalg::{self, Matrix};
    use approx::assert_relative_eq;

    /// Central-difference Jacobian of the right-hand side.
    fn fd_jacobian(sys: &OdeSystem, u: &[f64], h: f64) -> Matrix {
        let n = sys.dim();
        let mut out = Matrix::zeros(n, n);
        for c in 0..n {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[c] += h;
            dn[c] -= h;
            let fu = sys.eval_rhs(&up);
            let fd = sys.eval_rhs(&dn);
            for r in 0..n {
                out.set(r, c, (fu[r] - fd[r]) / (2.0 * h));
            }
        }
        out
    }

    fn check_jacobian(sys: &OdeSystem, samples: usize, tol: f64) {
        let mut rng = stream_rng(2024, 0, 0);
        let mut jac = Matrix::zeros(sys.dim(), sys.dim());
        for _ in 0..samples {
            let u = sys.domain.sample(&mut rng).unwrap();
            sys.jacobian(&u, &mut jac);
            let fd = fd_jacobian(sys, &u, 1e-6);
            for r in 0..sys.dim() {
                for c in 0..sys.dim() {
                    let a = jac.get(r, c);
                    let b = fd.get(r, c);
                    assert!(
                        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
                        "{} J[{r}][{c}]: analytic {a} vs fd {b}",
                        sys.name()
                    );
                }
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        check_jacobian(&linear(), 5, 1e-7);
        check_jacobian(&periodic_attractor(), 10, 1e-7);
        check_jacobian(&damped_pendulum(), 10, 1e-7);
        check_jacobian(&glycolytic(), 10, 1e-5);
        check_jacobian(&heat_rod_16(), 3, 1e-5);
    }

    #[test]
    fn robertson_jacobian_matches_finite_differences() {
        // The quadratic rate constant is 3e7, so scale-aware comparison.
        let sys = robertson();
        let mut rng = stream_rng(2024, 1, 0);
        let mut jac = Matrix::zeros(3, 3);
        for _ in 0..10 {
            let u = sys.domain.sample(&mut rng).unwrap();
            sys.jacobian(&u, &mut jac);
            let fd = fd_jacobian(&sys, &u, 1e-9);
            for r in 0..3 {
                for c in 0..3 {
                    let a = jac.get(r, c);
                    let b = fd.get(r, c);
                    assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()), "J[{r}][{c}]: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn linear_fixed_point_is_stationary() {
        let sys = linear();
        assert_eq!(sys.eval_rhs(&[1.0, 1.0]), vec![0.0, 0.0]);
        assert_relative_eq!(
            linalg::Matrix::from_rows(&[&[1.0, -4.0], &[4.0, -7.0]])
                .unwrap()
                .spectral_norm_2x2()
                .unwrap(),
            LINEAR_LIPSCHITZ
        );
    }

    #[test]
    fn unit_circle_is_invariant_for_the_attractor() {
        let sys = periodic_attractor();
        // On the circle the radial term vanishes and the flow is a rotation.
        let u = [0.6, 0.8];
        let f = sys.eval_rhs(&u);
        let radial = u[0] * f[0] + u[1] * f[1];
        assert!(radial.abs() <= 1e-14);
        let moved = rk4_evolve(&sys, &u, 2.0, 1e-3).unwrap();
        let r = (moved[0] * moved[0] + moved[1] * moved[1]).sqrt();
        assert_relative_eq!(r, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn pendulum_domain_is_forward_invariant() {
        // Energy E = u2^2/2 + beta (1 - cos u1) decays under damping, so
        // trajectories started inside the energy bound stay inside.
        let sys = damped_pendulum();
        let mut rng = stream_rng(7, 0, 0);
        for _ in 0..20 {
            let u0 = sys.domain.sample(&mut rng).unwrap();
            let u = rk4_evolve(&sys, &u0, 1.0, 1e-3).unwrap();
            let energy = |s: &[f64]| 0.5 * s[1] * s[1] + PENDULUM_BETA * (1.0 - s[0].cos());
            assert!(energy(&u) <= energy(&u0) + 1e-9);
        }
    }

    #[test]
    fn pendulum_lipschitz_constant_is_frozen() {
        // Verified against a dense scan of cos values in [-1, 1].
        let l = pendulum_lipschitz();
        assert_relative_eq!(l, 9.80206206348938796, max_relative = 1e-12);
        let scan = (0..=2000)
            .map(|i| -1.0 + i as f64 / 1000.0)
            .map(|c| {
                let m = Matrix::from_rows(&[&[0.0, 1.0], &[-PENDULUM_BETA * c, -PENDULUM_ALPHA]])
                    .unwrap();
                m.spectral_norm_2x2().unwrap()
            })
            .fold(0.0f64, f64::max);
        assert!(l >= scan - 1e-12);
    }

    #[test]
    fn robertson_conserves_mass_through_the_stiff_solver() {
        let sys = robertson();
        let mut rng = stream_rng(11, 0, 0);
        for _ in 0..5 {
            let u0 = sys.domain.sample(&mut rng).unwrap();
            assert_relative_eq!(u0[0] + u0[1] + u0[2], 1.0, max_relative = 1e-12);
            let u = evolve(&sys, &u0, 10.0, &Integrator::Stiff { tol: 1e-8 }).unwrap();
            assert!((u[0] + u[1] + u[2] - 1.0).abs() <= 1e-9, "mass {}", u[0] + u[1] + u[2]);
            assert!(u.iter().all(|x| *x >= -1e-9));
        }
    }

    #[test]
    fn glycolytic_stays_finite_over_data_horizons() {
        let sys = glycolytic();
        let mut rng = stream_rng(13, 0, 0);
        for _ in 0..3 {
            let u0 = sys.domain.sample(&mut rng).unwrap();
            let u = rk4_evolve(&sys, &u0, 0.3, 1e-4).unwrap();
            assert!(linalg::all_finite(&u));
        }
    }

    #[test]
    fn heat_diffusion_flattens_and_conserves_the_mean() {
        let sys = heat_rod_16();
        let u0: Vec<f64> = (0..16)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 16.0).sin())
            .collect();
        let u = rk4_evolve(&sys, &u0, 0.05, 1e-4).unwrap();
        let mean0: f64 = u0.iter().sum::<f64>() / 16.0;
        let mean: f64 = u.iter().sum::<f64>() / 16.0;
        assert!((mean - mean0).abs() <= 1e-12);
        let amp0 = u0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let amp = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(amp < amp0, "diffusion must damp the profile: {amp} !< {amp0}");
    }

    #[test]
    fn registry_knows_every_builtin() {
        for name in SYSTEM_NAMES {
            let sys = by_name(name).unwrap();
            assert_eq!(sys.name(), name);
            assert!(sys.dim() >= 1);
        }
        assert!(by_name("unknown").is_err());
    }
}
