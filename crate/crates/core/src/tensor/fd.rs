use super::Tensor;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function at `theta`:
/// `(f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, theta: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut probe = theta.clone();
    let mut grad = vec![0.0; theta.len()];
    for (i, gi) in grad.iter_mut().enumerate() {
        let orig = theta.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        *gi = (up - down) / (2.0 * h);
    }
    Tensor::new(theta.shape().to_vec(), grad).expect("same shape as theta")
}

/// `|a − b| / max(|a|, |b|, floor)`. The floor keeps gradients that are
/// zero up to round-off from reporting spurious relative error.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_derivatives() {
        let g = finite_diff_grad(|t| t.data()[0].powi(2), &Tensor::scalar(3.0), DEFAULT_FD_STEP);
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|t| t.data()[0].sin(), &Tensor::scalar(0.0), DEFAULT_FD_STEP);
        assert!((g.data()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn probe_is_restored() {
        let theta = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut seen = Vec::new();
        finite_diff_grad(
            |t| {
                seen.push(t.data().to_vec());
                t.data().iter().sum()
            },
            &theta,
            0.5,
        );
        assert_eq!(seen.last().unwrap(), &vec![1.0, 2.0, 2.5]);
        assert_eq!(theta.data(), &[1.0, 2.0, 3.0]);
    }
}
