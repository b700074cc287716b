use nalgebra::DMatrix;

use super::DiagError;

/// Finite chain `P` with initial law `rho0` and a lumping map onto blocks
/// `0..n_blocks`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChain {
    pub p: DMatrix<f64>,
    pub rho0: Vec<f64>,
    pub lump_map: Vec<usize>,
    pub n_blocks: usize,
}

impl DiscreteChain {
    pub fn new(p: DMatrix<f64>, rho0: Vec<f64>, lump_map: Vec<usize>) -> Result<Self, DiagError> {
        let n = p.nrows();
        let bad = |m: String| Err(DiagError::InvalidChain(m));
        if n == 0 || p.ncols() != n {
            return bad("P must be square and nonempty".into());
        }
        if rho0.len() != n || lump_map.len() != n {
            return bad("rho0 and lump_map must have one entry per state".into());
        }
        for i in 0..n {
            let row = p.row(i);
            if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (row.sum() - 1.0).abs() > 1e-12 {
                return bad(format!("row {i} of P is not a probability vector"));
            }
        }
        if rho0.iter().any(|v| *v < 0.0 || !v.is_finite())
            || (rho0.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return bad("rho0 is not a probability vector".into());
        }
        let n_blocks = lump_map.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_blocks];
        lump_map.iter().for_each(|b| seen[*b] = true);
        if let Some(b) = seen.iter().position(|s| !s) {
            return bad(format!("lump map misses block {b}"));
        }
        Ok(Self {
            p,
            rho0,
            lump_map,
            n_blocks,
        })
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    /// `ρ1 = ρ0ᵀ P`.
    pub fn rho1(&self) -> Vec<f64> {
        let n = self.n_states();
        (0..n)
            .map(|j| (0..n).map(|i| self.rho0[i] * self.p[(i, j)]).sum())
            .collect()
    }

    /// States with mass under `ρ0` or `ρ1`.
    pub fn visited(&self) -> Vec<bool> {
        let r1 = self.rho1();
        self.rho0
            .iter()
            .zip(&r1)
            .map(|(a, b)| *a > 0.0 || *b > 0.0)
            .collect()
    }

    /// `B(j, i) = ρ0(i) P_ij / ρ1(j)`; rows of states with no mass under
    /// either law are zero.
    pub fn backward_matrix(&self) -> Result<DMatrix<f64>, DiagError> {
        let n = self.n_states();
        let r1 = self.rho1();
        let mut b = DMatrix::zeros(n, n);
        for j in 0..n {
            if r1[j] == 0.0 {
                if self.rho0[j] > 0.0 {
                    return Err(DiagError::ZeroForwardMass(j));
                }
                continue;
            }
            for i in 0..n {
                b[(j, i)] = self.rho0[i] * self.p[(i, j)] / r1[j];
            }
        }
        Ok(b)
    }

    fn same_block_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_states();
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |k| (i, k)))
            .filter(|(i, k)| self.lump_map[*i] == self.lump_map[*k])
    }
}

fn tv(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    0.5 * m
        .row(a)
        .iter()
        .zip(m.row(b).iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// Largest total-variation distance between transition rows of states in
/// the same block.
pub fn lumpability_residual(chain: &DiscreteChain) -> f64 {
    chain
        .same_block_pairs()
        .map(|(i, k)| tv(&chain.p, i, k))
        .fold(0.0, f64::max)
}

/// Largest total-variation distance between backward rows of visited states
/// in the same block.
pub fn decomposability_residual(chain: &DiscreteChain) -> Result<f64, DiagError> {
    let b = chain.backward_matrix()?;
    let r1 = chain.rho1();
    Ok(chain
        .same_block_pairs()
        .filter(|(j, k)| r1[*j] > 0.0 && r1[*k] > 0.0)
        .map(|(j, k)| tv(&b, j, k))
        .fold(0.0, f64::max))
}

fn block_average(
    m: &DMatrix<f64>,
    weights: &[f64],
    lump: &[usize],
    n_blocks: usize,
) -> Result<DMatrix<f64>, DiagError> {
    let n = m.nrows();
    let mut avg = DMatrix::zeros(n_blocks, m.ncols());
    let mut mass = vec![0.0; n_blocks];
    for i in 0..n {
        mass[lump[i]] += weights[i];
        let scaled = m.row(i) * weights[i];
        let mut row = avg.row_mut(lump[i]);
        row += scaled;
    }
    if let Some(b) = mass.iter().position(|w| *w <= 0.0) {
        return Err(DiagError::EmptyBlock(b));
    }
    for (b, w) in mass.iter().enumerate() {
        let mut row = avg.row_mut(b);
        row /= *w;
    }
    let mut out = DMatrix::zeros(n, m.ncols());
    for i in 0..n {
        out.set_row(i, &avg.row(lump[i]));
    }
    Ok(out)
}

/// `K_L` (ρ0-weighted block average of the rows of `P`) and `T_D`
/// (ρ1-weighted block average of the backward rows).
pub fn reduced_operators(chain: &DiscreteChain) -> Result<(DMatrix<f64>, DMatrix<f64>), DiagError> {
    let kl = block_average(&chain.p, &chain.rho0, &chain.lump_map, chain.n_blocks)?;
    let b = chain.backward_matrix()?;
    let td = block_average(&b, &chain.rho1(), &chain.lump_map, chain.n_blocks)?;
    Ok((kl, td))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rows: &[&[f64]], rho0: &[f64], lump: &[usize]) -> DiscreteChain {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DiscreteChain::new(
            DMatrix::from_row_slice(n, n, &flat),
            rho0.to_vec(),
            lump.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn block_constant_rows_are_lumpable() {
        let c = chain(
            &[&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], &[0.6, 0.1, 0.3]],
            &[0.3, 0.3, 0.4],
            &[0, 0, 1],
        );
        assert_eq!(lumpability_residual(&c), 0.0);
        let (kl, _) = reduced_operators(&c).unwrap();
        assert!((kl - &c.p).abs().max() < 1e-12);
    }

    #[test]
    fn opposite_rows_have_unit_residual() {
        let c = chain(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.5, 0.5], &[0, 0]);
        assert_eq!(lumpability_residual(&c), 1.0);
    }

    #[test]
    fn perturbed_rows_match_brute_force() {
        let c = chain(
            &[
                &[0.4, 0.1, 0.3, 0.2],
                &[0.3, 0.2, 0.2, 0.3],
                &[0.25, 0.25, 0.25, 0.25],
                &[0.35, 0.15, 0.35, 0.15],
            ],
            &[0.25; 4],
            &[0, 0, 1, 1],
        );
        let tv01 = 0.5 * (0.1 + 0.1 + 0.1 + 0.1);
        let tv23 = 0.5 * (0.1 + 0.1 + 0.1 + 0.1);
        assert!((lumpability_residual(&c) - f64::max(tv01, tv23)).abs() < 1e-15);
    }

    #[test]
    fn identity_chain_backward_residual() {
        let c = chain(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[0.5, 0.3, 0.2],
            &[0, 0, 1],
        );
        // Backward rows are indicators, so states 0 and 1 differ maximally.
        assert_eq!(decomposability_residual(&c).unwrap(), 1.0);
        assert_eq!(lumpability_residual(&c), 1.0);
    }

    #[test]
    fn singleton_blocks_do_not_reduce() {
        let c = chain(&[&[0.7, 0.3], &[0.4, 0.6]], &[0.2, 0.8], &[0, 1]);
        let (kl, td) = reduced_operators(&c).unwrap();
        assert!((kl - &c.p).abs().max() < 1e-15);
        assert!((td - c.backward_matrix().unwrap()).abs().max() < 1e-15);
    }

    #[test]
    fn zero_forward_mass_on_visited_state_is_rejected() {
        let c = chain(&[&[0.0, 1.0], &[0.0, 1.0]], &[0.5, 0.5], &[0, 0]);
        assert!(matches!(
            decomposability_residual(&c),
            Err(DiagError::ZeroForwardMass(0))
        ));
    }

    #[test]
    fn empty_block_is_rejected() {
        let c = chain(&[&[0.5, 0.5], &[0.5, 0.5]], &[1.0, 0.0], &[0, 1]);
        assert!(matches!(
            reduced_operators(&c),
            Err(DiagError::EmptyBlock(1))
        ));
    }

    #[test]
    fn invalid_chains() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(DiscreteChain::new(p.clone(), vec![0.5, 0.5], vec![0, 0]).is_err());
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(DiscreteChain::new(p.clone(), vec![0.5, 0.5], vec![0, 2]).is_err());
        assert!(DiscreteChain::new(p, vec![0.7, 0.5], vec![0, 0]).is_err());
    }
}
