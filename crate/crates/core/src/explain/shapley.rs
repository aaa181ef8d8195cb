use super::{Attribution, AttributionReport, Method};
use crate::encoders::{Block, Layout};
use crate::error::{Error, Result};
use crate::model::{Classifier, Dataset, Inputs};
use crate::nlp::{Vocabulary, PAD_ID};

/// Largest feature set enumerated exactly (2^15 coalitions).
pub const MAX_SHAPLEY_FEATURES: usize = 15;

/// Exact Shapley values of an `n`-player game given by the value of each
/// coalition (`present[i]` marks membership).
pub fn shapley_coalitions<F: FnMut(&[bool]) -> f64>(n: usize, mut value: F) -> Result<Vec<f64>> {
    if n > MAX_SHAPLEY_FEATURES {
        return Err(Error::Size {
            n,
            max: MAX_SHAPLEY_FEATURES,
        });
    }
    let total = 1usize << n;
    let mut present = vec![false; n];
    let v: Vec<f64> = (0..total)
        .map(|mask| {
            for (i, p) in present.iter_mut().enumerate() {
                *p = mask >> i & 1 == 1;
            }
            value(&present)
        })
        .collect();
    // |S|! (n - |S| - 1)! / n!, exact in f64 for n <= 15.
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |f, k| {
            if k > 0 {
                *f *= k as f64;
            }
            Some(*f)
        })
        .collect();
    let weight: Vec<f64> = (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect();
    let mut phi = vec![0.0; n];
    for mask in 0..total {
        let s = (mask as u32).count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weight[s] * (v[mask | 1 << i] - v[mask]);
            }
        }
    }
    Ok(phi)
}

/// Shapley values of `f` at `x`, removing a feature by setting it to its baseline.
pub fn shapley_values<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    if x.len() != baseline.len() {
        return Err(Error::Shape(
            "instance and baseline differ in length".into(),
        ));
    }
    let mut z = baseline.to_vec();
    shapley_coalitions(x.len(), |present| {
        for (i, &p) in present.iter().enumerate() {
            z[i] = if p { x[i] } else { baseline[i] };
        }
        f(&z)
    })
}

fn report(
    names: Vec<String>,
    phi: Vec<f64>,
    reference: f64,
    baseline: f64,
    class: usize,
) -> AttributionReport {
    AttributionReport {
        method: Method::ShapleyExact,
        target: format!("p(class {class})"),
        reference,
        baseline: Some(baseline),
        entries: names
            .into_iter()
            .zip(phi)
            .map(|(feature, score)| Attribution {
                feature,
                score,
                spread: 0.0,
            })
            .collect(),
    }
}

fn check_sample(model: &dyn Classifier, data: &Dataset, index: usize, class: usize) -> Result<()> {
    if index >= data.len() {
        return Err(Error::Shape(format!(
            "sample {index} out of {}",
            data.len()
        )));
    }
    if class >= model.num_classes() {
        return Err(Error::Shape(format!(
            "class {class} out of {}",
            model.num_classes()
        )));
    }
    Ok(())
}

/// Shapley values of the seven encoder blocks for one sample; a removed block is zeroed.
pub fn shapley_blocks(
    model: &dyn Classifier,
    data: &Dataset,
    index: usize,
    class: usize,
    layout: &Layout,
) -> Result<AttributionReport> {
    check_sample(model, data, index, class)?;
    let one = data.subset(&[index]);
    let Inputs::Dense {
        seq_len,
        dim,
        values,
    } = &one.inputs
    else {
        return Err(Error::Shape(
            "block Shapley values need knowledge-encoded inputs".into(),
        ));
    };
    if *dim != layout.total() {
        return Err(Error::Shape(format!(
            "rows have {dim} values, layout expects {}",
            layout.total()
        )));
    }
    let mut probe = one.clone();
    let mut eval = |present: &[bool]| -> f64 {
        let Inputs::Dense { values: buf, .. } = &mut probe.inputs else {
            unreachable!()
        };
        buf.copy_from_slice(values);
        for (b, _) in Block::ALL.iter().zip(present).filter(|(_, p)| !**p) {
            let r = layout.range(*b);
            for t in 0..*seq_len {
                buf[t * dim + r.start..t * dim + r.end]
                    .iter_mut()
                    .for_each(|v| *v = 0.0);
            }
        }
        model.predict_proba(&probe, 0)[class]
    };
    let reference = eval(&[true; 7]);
    let baseline = eval(&[false; 7]);
    let phi = shapley_coalitions(Block::ALL.len(), eval)?;
    Ok(report(
        Block::ALL.iter().map(|b| b.as_str().to_string()).collect(),
        phi,
        reference,
        baseline,
        class,
    ))
}

/// Shapley values of chosen tokens for one sample; a removed token has every
/// occurrence replaced by padding.
pub fn shapley_tokens(
    model: &dyn Classifier,
    data: &Dataset,
    index: usize,
    class: usize,
    tokens: &[u32],
    vocab: &Vocabulary,
) -> Result<AttributionReport> {
    check_sample(model, data, index, class)?;
    if tokens.len() > MAX_SHAPLEY_FEATURES {
        return Err(Error::Size {
            n: tokens.len(),
            max: MAX_SHAPLEY_FEATURES,
        });
    }
    let one = data.subset(&[index]);
    let Inputs::Tokens { ids, .. } = &one.inputs else {
        return Err(Error::Shape(
            "token Shapley values need token inputs".into(),
        ));
    };
    let mut probe = one.clone();
    let mut eval = |present: &[bool]| -> f64 {
        let Inputs::Tokens { ids: buf, .. } = &mut probe.inputs else {
            unreachable!()
        };
        for (dst, &src) in buf.iter_mut().zip(ids) {
            let gone = tokens.iter().zip(present).any(|(&t, &p)| !p && t == src);
            *dst = if gone { PAD_ID } else { src };
        }
        model.predict_proba(&probe, 0)[class]
    };
    let reference = eval(&vec![true; tokens.len()]);
    let baseline = eval(&vec![false; tokens.len()]);
    let phi = shapley_coalitions(tokens.len(), eval)?;
    let names = tokens
        .iter()
        .map(|&t| {
            vocab
                .token(t)
                .map_or_else(|| format!("#{t}"), str::to_string)
        })
        .collect();
    Ok(report(names, phi, reference, baseline, class))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Shapley value straight from the permutation definition: average the
    /// marginal contribution over all n! orderings.
    fn by_orderings(n: usize, v: &dyn Fn(&[bool]) -> f64) -> Vec<f64> {
        fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let all = perms((0..n).collect());
        let mut phi = vec![0.0; n];
        for order in &all {
            let mut present = vec![false; n];
            for &i in order {
                let before = v(&present);
                present[i] = true;
                phi[i] += v(&present) - before;
            }
        }
        phi.iter().map(|p| p / all.len() as f64).collect()
    }

    #[test]
    fn additive_closed_form() {
        let w = [0.5, -2.0, 3.0];
        let x = [1.0, 2.0, -1.0];
        let base = [0.2, 0.0, 1.0];
        let f = |z: &[f64]| z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let phi = shapley_values(f, &x, &base).unwrap();
        for i in 0..3 {
            assert!((phi[i] - w[i] * (x[i] - base[i])).abs() < 1e-12);
        }
        assert!((phi.iter().sum::<f64>() - (f(&x) - f(&base))).abs() < 1e-12);
    }

    #[test]
    fn matches_ordering_definition_on_interactions() {
        let v = |p: &[bool]| -> f64 {
            let s: Vec<f64> = p.iter().map(|&b| b as u8 as f64).collect();
            s[0] * s[1] * 3.0 + s[2] - 0.5 * s[0] * s[2] * s[3] + s[3].powi(2) * 0.25
        };
        let phi = shapley_coalitions(4, v).unwrap();
        let oracle = by_orderings(4, &v);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{phi:?} vs {oracle:?}");
        }
    }

    #[test]
    fn dummy_and_symmetry_axioms() {
        // Feature 2 never matters; features 0 and 1 are interchangeable.
        let f = |z: &[f64]| (z[0] + z[1]).tanh() + z[0] * z[1];
        let phi = shapley_values(f, &[1.0, 1.0, 5.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(phi[2], 0.0);
        assert!((phi[0] - phi[1]).abs() < 1e-15);
    }

    #[test]
    fn size_limit() {
        assert!(matches!(
            shapley_coalitions(16, |_| 0.0),
            Err(Error::Size { n: 16, max: 15 })
        ));
        assert_eq!(shapley_coalitions(0, |_| 1.0).unwrap(), Vec::<f64>::new());
    }
}
