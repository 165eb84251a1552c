use crate::correlation::CorrelationSet;
use crate::geometry::{MicArray, TdeVector};

/// Independent peak picking on each `ρ_{1,m}` over `[−t*_{1,m}, t*_{1,m}]`,
/// refined by a parabola through the peak and its two neighbours.
///
/// No cross-pair consistency is enforced, so the result may be infeasible.
pub fn estimate_pairwise_delays(set: &CorrelationSet, array: &MicArray) -> TdeVector {
    let fs = set.sample_rate();
    let delays = (1..array.num_mics())
        .map(|m| {
            let f = set.function(0, m);
            let bound = array.pair_bound(0, m);
            let table = f.max_lag() as isize;
            let k = ((bound * fs).floor() as isize).min(table);
            let best = (-k..=k)
                .max_by(|a, b| f.sample(*a).total_cmp(&f.sample(*b)).then(b.cmp(a)))
                .expect("non-empty lag range");
            let mut lag = best as f64;
            if best > -table && best < table {
                let (ym, y0, yp) = (f.sample(best - 1), f.sample(best), f.sample(best + 1));
                let denom = ym - 2.0 * y0 + yp;
                if denom < 0.0 {
                    lag += (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
                }
            }
            (lag / fs).clamp(-bound, bound)
        })
        .collect();
    TdeVector::new(delays)
}
