//! Partition maintenance: minor rebalancing migrates single values between
//! the heavy and light sides when their degrees cross the relaxed
//! thresholds, and major rebalancing doubles or halves the capacity and
//! rebuilds when the database size leaves `[floor(M/4), M)`.
//!
//! The relaxed thresholds leave a hysteresis band: a light value turns
//! heavy only above `(3/2) * M^eps` and a heavy value turns light only at
//! or below `(1/2) * M^eps`, so values near `M^eps` do not oscillate.
//! Migration re-routes the affected tuples through the normal delta
//! machinery (delete under the old label, flip, reinsert), leaving the
//! size and degree counters untouched and never cascading, because no
//! other value's degree changes.

use crate::engine::Engine;
use crate::query::VarId;

/// Called after every accepted update with the (join variable, value)
/// pairs whose degrees changed.
pub fn after_update(engine: &mut Engine, touched: &[(VarId, i64)]) {
    for &(var, value) in touched {
        maybe_minor(engine, var, value);
    }
    maybe_major(engine);
}

/// Flip one value's side if its degree crossed a relaxed threshold.
pub fn maybe_minor(engine: &mut Engine, var: VarId, value: i64) {
    let t = engine.thresholds();
    let degree = engine.degree(var, value);
    let heavy = engine.partitions[&var].is_heavy(value);
    if !heavy && t.above_upper(degree) {
        migrate(engine, var, value, true);
    } else if heavy && t.below_lower(degree) {
        migrate(engine, var, value, false);
    }
}

fn migrate(engine: &mut Engine, var: VarId, value: i64, to_heavy: bool) {
    // Every tuple containing the value, in any atom with the variable.
    let mut affected: Vec<(usize, Vec<i64>)> = Vec::new();
    for a in 0..engine.bases.len() {
        if !engine.bases[a].schema.contains(var) {
            continue;
        }
        let schema = engine.bases[a].schema;
        let key_vars = crate::query::VarSet::singleton(var);
        let rest = schema.minus(key_vars);
        let groups = engine.bases[a].full.probe(key_vars, rest, &[value]);
        let layout: Vec<VarId> = schema.iter().collect();
        let vpos = layout.binary_search(&var).expect("var in schema");
        let rest_ids: Vec<VarId> = rest.iter().collect();
        for (proj, _) in groups {
            let mut t = vec![0i64; layout.len()];
            t[vpos] = value;
            for (rv, pv) in rest_ids.iter().zip(&proj) {
                let pos = layout.binary_search(rv).unwrap();
                t[pos] = *pv;
            }
            affected.push((a, t));
        }
    }
    // Delete under the old label, flip, reinsert under the new one.
    for (a, t) in &affected {
        engine.propagate(*a, t, -1);
    }
    engine.partitions.get_mut(&var).unwrap().set_heavy(value, to_heavy);
    for (a, t) in &affected {
        engine.propagate(*a, t, 1);
    }
    engine.stats.minor += 1;
}

/// Double or halve the capacity and rebuild when the size invariant
/// `floor(M/4) <= N < M` breaks.
pub fn maybe_major(engine: &mut Engine) {
    if !engine.major_enabled {
        return;
    }
    if engine.n >= engine.m {
        engine.m *= 2;
        engine.stats.major += 1;
        engine.rebuild();
    } else if engine.n < engine.m / 4 {
        engine.m = (engine.m / 2).saturating_sub(1).max(1);
        engine.stats.major += 1;
        engine.rebuild();
    }
}
