use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |numeric|)` over all entries.
    pub max_rel_error: f64,
    /// The same maximum per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    /// Maximum error over parameters whose name starts with `prefix`.
    pub fn group_error(&self, prefix: &str) -> Option<f64> {
        self.per_param
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, e)| *e)
            .reduce(f64::max)
    }
}

/// Compares the reverse-mode gradient of the scalar built by `f` against
/// central differences with step `eps`, for every entry of every parameter
/// in `store`. `f` must be deterministic.
///
/// Parameter values are restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(Error::Contract("grad_check needs a scalar function".into()));
        }
        let v = v.item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.backward(out)?;

    let ids: Vec<_> = store.ids().collect();
    let mut per_param = Vec::with_capacity(ids.len());
    let mut max_rel_error = 0.0f64;
    for id in ids {
        let analytic: Vec<f64> = match g.param_var(id).and_then(|v| g.grad(v)) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; store.value(id).len()],
        };
        let mut worst = 0.0f64;
        for i in 0..store.value(id).len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(store);
            store.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(store);
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
        max_rel_error = max_rel_error.max(worst);
        per_param.push((store.name(id).to_string(), worst));
    }
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
    })
}
