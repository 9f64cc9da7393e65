//! Adaptive Dormand–Prince 5(4) integrator over flat `f64` state slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order solution minus embedded fourth-order solution
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrate `y' = rhs(t, y)` from `t0` to `t1` in place.
///
/// `rhs` writes the derivative into its third argument and may fail, in which
/// case the error is returned unchanged. A zero-length interval is a no-op.
pub fn integrate<F>(
    opts: &IntegratorOptions,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    mut rhs: F,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut stats = IntegrationStats::default();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(stats);
    }
    if !span.is_finite() {
        return Err(Error::Integrator(format!("non-finite interval [{t0}, {t1}]")));
    }
    let dir = span.signum();
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(t0, y, &mut k[0])?;
    stats.evaluations += 1;
    check_finite(&k[0], t0)?;

    let mut h = initial_step(opts, t0, y, &k[0], span, &mut rhs, &mut tmp, &mut y_new)?;
    stats.evaluations += 1;
    let mut t = t0;
    let min_step = 16.0 * f64::EPSILON * (t0.abs().max(t1.abs())).max(span.abs());

    loop {
        let remaining = t1 - t;
        if remaining * dir <= 0.0 {
            break;
        }
        let mut last = false;
        if (h * 1.01).abs() >= remaining.abs() {
            h = remaining;
            last = true;
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }

        let (head, tail) = k.split_at_mut(1);
        let k1 = &head[0];
        let [k2, k3, k4, k5, k6, k7] = tail else {
            unreachable!()
        };

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &tmp, k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &tmp, k5)?;
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &tmp, k6)?;
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, &y_new, k7)?;
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            // treat as a failed step and retry smaller
            stats.rejected += 1;
            h *= FAC_MIN;
            if h.abs() < min_step {
                return Err(Error::Integrator(format!("non-finite derivative near t = {t}")));
            }
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = t_new;
            y.copy_from_slice(&y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if last {
                break;
            }
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            if h.abs() < min_step {
                return Err(Error::Integrator(format!(
                    "step size underflow at t = {t} (h = {h:e})"
                )));
            }
        }
    }
    Ok(stats)
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integrator(format!("non-finite derivative at t = {t}")))
    }
}

// Hairer–Wanner starting step heuristic.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    opts: &IntegratorOptions,
    t0: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    rhs: &mut F,
    y1: &mut [f64],
    f1: &mut [f64],
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len() as f64;
    let dir = span.signum();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span.abs());
    for i in 0..y.len() {
        y1[i] = y[i] + dir * h0 * f0[i];
    }
    rhs(t0 + dir * h0, y1, f1)?;
    let mut d2 = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    let d2 = (d2 / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok(dir * (100.0 * h0).min(h1).min(span.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let mut y = [1.0];
        integrate(&IntegratorOptions::default(), 0.0, 2.0, &mut y, |_, y, dy| {
            dy[0] = -1.5 * y[0];
            Ok(())
        })
        .unwrap();
        assert_relative_eq!(y[0], (-3.0f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let mut y = [0.0, 1.0];
        integrate(&IntegratorOptions::default(), 0.0, -3.0, &mut y, |_, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        })
        .unwrap();
        assert_relative_eq!(y[0], (-3.0f64).sin(), epsilon = 1e-9);
        assert_relative_eq!(y[1], (-3.0f64).cos(), epsilon = 1e-9);
    }

    #[test]
    fn zero_interval_is_noop() {
        let mut y = [3.0];
        let stats = integrate(&IntegratorOptions::default(), 1.0, 1.0, &mut y, |_, _, _| {
            panic!("rhs must not be called")
        })
        .unwrap();
        assert_eq!(y[0], 3.0);
        assert_eq!(stats.evaluations, 0);
    }

    #[test]
    fn blow_up_reports_failure() {
        // y' = y^2 from y=1 escapes at t = 1
        let mut y = [1.0];
        let err = integrate(&IntegratorOptions::default(), 0.0, 2.0, &mut y, |_, y, dy| {
            dy[0] = y[0] * y[0];
            Ok(())
        });
        assert!(err.is_err());
    }

    #[test]
    fn rhs_error_propagates() {
        let mut y = [1.0];
        let err = integrate(&IntegratorOptions::default(), 0.0, 1.0, &mut y, |t, _, dy| {
            if t > 0.5 {
                return Err(Error::Domain("test".into()));
            }
            dy[0] = 1.0;
            Ok(())
        })
        .unwrap_err();
        assert_eq!(err, Error::Domain("test".into()));
    }
}
