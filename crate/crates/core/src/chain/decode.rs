use super::ChainPotentials;
use crate::error::{CrfError, Result};

/// Highest-scoring label sequence and its unnormalized log score.
///
/// Ties go to the lowest context code (for order 1, the lowest label), and
/// within a cell to the lowest predecessor.
pub fn viterbi(pot: &ChainPotentials) -> Result<(Vec<usize>, f64)> {
    if pot.order() == 1 {
        viterbi_first_order(pot)
    } else {
        viterbi_higher_order(pot)
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn viterbi_first_order(pot: &ChainPotentials) -> Result<(Vec<usize>, f64)> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let mut delta = vec![vec![f64::NEG_INFINITY; l]; n];
    let mut back = vec![vec![0usize; l]; n];
    for y in 0..l {
        delta[0][y] = pot.trans_at(l * base + y) + pot.state_at(0, y);
    }
    for i in 1..n {
        for y in 0..l {
            let (yp, best) =
                argmax_first((0..l).map(|yp| delta[i - 1][yp] + pot.trans_at(yp * base + y)));
            delta[i][y] = best + pot.state_at(i, y);
            back[i][y] = yp;
        }
    }
    let (mut y, score) = argmax_first(delta[n - 1].iter().copied());
    let mut labels = vec![0; n];
    for i in (0..n).rev() {
        labels[i] = y;
        y = back[i][y];
    }
    Ok((labels, score))
}

pub fn viterbi_higher_order(pot: &ChainPotentials) -> Result<(Vec<usize>, f64)> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let contexts = pot.num_contexts();
    let shift = contexts / base;
    let boundary = pot.boundary_context();
    let mut delta = vec![vec![f64::NEG_INFINITY; contexts]; n];
    let mut back = vec![vec![0usize; contexts]; n];
    for y in 0..l {
        let gram = boundary * base + y;
        delta[0][gram % contexts] = pot.trans_at(gram) + pot.state_at(0, y);
    }
    for i in 1..n {
        for c in 0..contexts {
            let y = c % base;
            if y == l {
                continue;
            }
            let suffix = c / base;
            let (x, best) = argmax_first((0..base).map(|x| {
                let p = x * shift + suffix;
                delta[i - 1][p] + pot.trans_at(p * base + y)
            }));
            if best > f64::NEG_INFINITY {
                delta[i][c] = best + pot.state_at(i, y);
                back[i][c] = x * shift + suffix;
            }
        }
    }
    let (mut c, score) = argmax_first(delta[n - 1].iter().copied());
    let mut labels = vec![0; n];
    for i in (0..n).rev() {
        labels[i] = c % base;
        c = back[i][c];
    }
    Ok((labels, score))
}
