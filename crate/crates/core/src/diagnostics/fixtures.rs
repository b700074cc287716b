//! Programmatic chain families with known residuals.

use nalgebra::DMatrix;
use rand::Rng;

use super::DiscreteChain;
use crate::rng;

fn random_distribution<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.05).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Surjective lump map: the first `m` states cover every block once, the
/// rest are random.
fn random_lump<R: Rng>(r: &mut R, n: usize, m: usize) -> Vec<usize> {
    (0..n)
        .map(|i| if i < m { i } else { r.random_range(0..m) })
        .collect()
}

fn normalized(mut p: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..p.nrows() {
        let s = p.row(i).sum();
        let mut row = p.row_mut(i);
        row /= s;
    }
    p
}

/// Random chain whose transition rows are constant within blocks.
pub fn lumpable_chain(n: usize, m: usize, seed: u64) -> DiscreteChain {
    let mut r = rng::stream(seed);
    let lump = random_lump(&mut r, n, m);
    let block_rows: Vec<Vec<f64>> = (0..m).map(|_| random_distribution(&mut r, n)).collect();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = block_rows[lump[i]][j];
        }
    }
    let rho0 = random_distribution(&mut r, n);
    DiscreteChain::new(normalized(p), rho0, lump).expect("valid fixture")
}

/// `P_ij = Q(r(i), r(j)) · e(j)` with `e` a within-block emission law that
/// does not depend on the source. Both residuals vanish.
pub fn product_chain(n: usize, m: usize, seed: u64) -> DiscreteChain {
    let mut r = rng::stream(seed);
    let lump = random_lump(&mut r, n, m);
    let q: Vec<Vec<f64>> = (0..m).map(|_| random_distribution(&mut r, m)).collect();
    let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.05).collect();
    let mut block_mass = vec![0.0; m];
    for j in 0..n {
        block_mass[lump[j]] += raw[j];
    }
    let emission: Vec<f64> = (0..n).map(|j| raw[j] / block_mass[lump[j]]).collect();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = q[lump[i]][lump[j]] * emission[j];
        }
    }
    let rho0 = random_distribution(&mut r, n);
    DiscreteChain::new(normalized(p), rho0, lump).expect("valid fixture")
}

/// Perturb one row of a chain inside a non-singleton block, moving `eps` of
/// mass between two columns.
pub fn perturbed(chain: &DiscreteChain, eps: f64, seed: u64) -> DiscreteChain {
    let mut r = rng::stream(seed);
    let n = chain.n_states();
    let candidates: Vec<usize> = (0..n)
        .filter(|i| (0..n).any(|k| k != *i && chain.lump_map[k] == chain.lump_map[*i]))
        .collect();
    let i = candidates[r.random_range(0..candidates.len())];
    let mut p = chain.p.clone();
    let (a, b) = {
        let a = (0..n)
            .max_by(|x, y| p[(i, *x)].total_cmp(&p[(i, *y)]))
            .expect("nonempty");
        let b = (a + 1 + r.random_range(0..n - 1)) % n;
        (a, b)
    };
    let delta = eps.min(p[(i, a)]);
    p[(i, a)] -= delta;
    p[(i, b)] += delta;
    DiscreteChain::new(p, chain.rho0.clone(), chain.lump_map.clone()).expect("valid fixture")
}

/// Unstructured random chain with strictly positive entries.
pub fn random_chain(n: usize, m: usize, seed: u64) -> DiscreteChain {
    let mut r = rng::stream(seed);
    let lump = random_lump(&mut r, n, m);
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = random_distribution(&mut r, n);
        for j in 0..n {
            p[(i, j)] = row[j];
        }
    }
    let rho0 = random_distribution(&mut r, n);
    DiscreteChain::new(normalized(p), rho0, lump).expect("valid fixture")
}

/// Permute states (rows, columns, `ρ0`, lump map) by `perm`: new state `k`
/// is old state `perm[k]`.
pub fn permuted(chain: &DiscreteChain, perm: &[usize]) -> DiscreteChain {
    let n = chain.n_states();
    let p = DMatrix::from_fn(n, n, |a, b| chain.p[(perm[a], perm[b])]);
    let rho0 = perm.iter().map(|&i| chain.rho0[i]).collect();
    let lump = perm.iter().map(|&i| chain.lump_map[i]).collect();
    DiscreteChain::new(p, rho0, lump).expect("permutation keeps validity")
}
