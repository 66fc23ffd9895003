//! `mathbench`: fixed numeric kernels seeded by the input. There is no
//! parsing and control flow never depends on the input.

use crate::cov;
use crate::executor::{Probe, Stop};

pub const ID: &str = "mathbench";

const N: usize = 8;
const ROUNDS: usize = 16;

fn seed_matrix(input: &[u8]) -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let b = input.get((i * N + j) % input.len().max(1)).copied().unwrap_or(0);
            *x = (b as f64 + 1.0) / 257.0 + if i == j { 1.0 } else { 0.0 };
        }
    }
    m
}

fn matmul(a: &[[f64; N]; N], b: &[[f64; N]; N], p: &mut Probe) -> Result<[[f64; N]; N], Stop> {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        cov!(p, "matmul_row")?;
        for j in 0..N {
            c[i][j] = (0..N).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    Ok(c)
}

/// Power iteration; returns the dominant eigenvalue estimate.
fn power(m: &[[f64; N]; N], p: &mut Probe) -> Result<f64, Stop> {
    let mut v = [1.0; N];
    let mut lambda = 0.0;
    for _ in 0..ROUNDS {
        cov!(p, "power_step")?;
        let mut w = [0.0; N];
        for i in 0..N {
            w[i] = (0..N).map(|k| m[i][k] * v[k]).sum();
        }
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..N {
            v[i] = w[i] / lambda;
        }
    }
    Ok(lambda)
}

pub fn run(input: &[u8], p: &mut Probe) -> Result<i32, Stop> {
    p.call("bench_main", |p| {
        let a = seed_matrix(input);
        let sq = p.call("matmul", |p| matmul(&a, &a, p))?;
        let lambda = p.call("power_iteration", |p| power(&sq, p))?;
        p.log("kernel matmul done");
        p.log("kernel power iteration converged");
        p.log("benchmark complete all kernels ok");
        p.ret("lambda", lambda as i64);
        p.ret("rounds", ROUNDS as i64);
        p.output(b"result ok");
        Ok(0)
    })
}
