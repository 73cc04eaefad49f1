//! Exhaustive ground truth over the plan space: global optima by full
//! enumeration, and the induced measures of how strongly a layout change
//! affects the plan space and whether it blindsides an optimal planner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{waycost, DomainError, FactoryLayout};

/// Safety valve for m^n enumeration; anything above must be requested
/// explicitly.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Cost differences above this count a route as affected. Waycosts are
/// integers, so the default captures any change at all.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration needs {routes} route visits, over the budget of {budget}; pass a larger budget to proceed")]
    BudgetExceeded { routes: u128, budget: u64 },
    #[error("layouts differ in shape: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn route_count(layout: &FactoryLayout) -> u128 {
    let exp = u32::try_from(layout.tasks()).unwrap_or(u32::MAX);
    (layout.stations_per_task() as u128).saturating_pow(exp)
}

fn check_budget(layout: &FactoryLayout, budget: u64) -> Result<u64, OracleError> {
    let routes = route_count(layout);
    if routes > budget as u128 {
        return Err(OracleError::BudgetExceeded { routes, budget });
    }
    Ok(routes as u64)
}

fn check_same_shape(e1: &FactoryLayout, e2: &FactoryLayout) -> Result<(), OracleError> {
    if e1.tasks() != e2.tasks() || e1.stations_per_task() != e2.stations_per_task() {
        return Err(OracleError::ShapeMismatch(
            e1.tasks(),
            e1.stations_per_task(),
            e2.tasks(),
            e2.stations_per_task(),
        ));
    }
    Ok(())
}

/// Visits every route of the plan space in lexicographic order (position 0
/// most significant).
fn for_each_route(tasks: usize, stations_per_task: usize, mut visit: impl FnMut(&[usize])) {
    let mut route = vec![0usize; tasks];
    loop {
        visit(&route);
        let mut pos = tasks;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            route[pos] += 1;
            if route[pos] < stations_per_task {
                break;
            }
            route[pos] = 0;
        }
    }
}

/// The whole fitness landscape of one layout: waycost of every route,
/// indexed in lexicographic route order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTable {
    tasks: usize,
    stations_per_task: usize,
    costs: Vec<i64>,
}

impl PlanTable {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn costs(&self) -> &[i64] {
        &self.costs
    }

    /// Decodes a table index back into its route (mixed-radix, position 0
    /// most significant).
    pub fn route_at(&self, index: usize) -> Vec<usize> {
        let mut route = vec![0usize; self.tasks];
        let mut rest = index;
        for pos in (0..self.tasks).rev() {
            route[pos] = rest % self.stations_per_task;
            rest /= self.stations_per_task;
        }
        route
    }

    /// CSV dump, one row per route: `route,waycost` with dash-joined
    /// station ids.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("route,waycost\n");
        for (index, cost) in self.costs.iter().enumerate() {
            let route = self.route_at(index);
            let joined = route
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join("-");
            out.push_str(&joined);
            out.push(',');
            out.push_str(&cost.to_string());
            out.push('\n');
        }
        out
    }
}

/// Enumerates every route's waycost.
pub fn plan_table(layout: &FactoryLayout, budget: u64) -> Result<PlanTable, OracleError> {
    let routes = check_budget(layout, budget)?;
    let mut costs = Vec::with_capacity(routes as usize);
    let mut failure: Option<DomainError> = None;
    for_each_route(layout.tasks(), layout.stations_per_task(), |route| {
        if failure.is_some() {
            return;
        }
        match waycost(route, layout) {
            Ok(cost) => costs.push(cost),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(PlanTable {
        tasks: layout.tasks(),
        stations_per_task: layout.stations_per_task(),
        costs,
    })
}

/// Global minimum waycost and the lexicographically smallest route
/// attaining it.
pub fn enumerate_optimum(
    layout: &FactoryLayout,
    budget: u64,
) -> Result<(Vec<usize>, i64), OracleError> {
    check_budget(layout, budget)?;
    let mut best: Option<(Vec<usize>, i64)> = None;
    let mut failure: Option<DomainError> = None;
    for_each_route(layout.tasks(), layout.stations_per_task(), |route| {
        if failure.is_some() {
            return;
        }
        match waycost(route, layout) {
            Ok(cost) => {
                if best.as_ref().is_none_or(|(_, b)| cost < *b) {
                    best = Some((route.to_vec(), cost));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(best.expect("layouts always have at least one route"))
}

/// Fraction of all routes whose waycost differs by more than `epsilon`
/// between the two layouts. Symmetric in its layout arguments.
pub fn affected_fraction(
    e1: &FactoryLayout,
    e2: &FactoryLayout,
    epsilon: f64,
    budget: u64,
) -> Result<f64, OracleError> {
    check_same_shape(e1, e2)?;
    let routes = check_budget(e1, budget)?;
    let mut affected = 0u64;
    let mut failure: Option<DomainError> = None;
    for_each_route(e1.tasks(), e1.stations_per_task(), |route| {
        if failure.is_some() {
            return;
        }
        match (waycost(route, e1), waycost(route, e2)) {
            (Ok(c1), Ok(c2)) => {
                if ((c1 - c2).abs() as f64) > epsilon {
                    affected += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(affected as f64 / routes as f64)
}

/// True iff no route is globally optimal in both layouts, i.e. the argmin
/// sets are disjoint and a planner tuned to `e1` must adapt. Two passes:
/// find both minima, then look for a route attaining both.
pub fn is_unexpected(
    e1: &FactoryLayout,
    e2: &FactoryLayout,
    budget: u64,
) -> Result<bool, OracleError> {
    check_same_shape(e1, e2)?;
    check_budget(e1, budget)?;
    let mut min1 = i64::MAX;
    let mut min2 = i64::MAX;
    let mut failure: Option<DomainError> = None;
    for_each_route(e1.tasks(), e1.stations_per_task(), |route| {
        if failure.is_some() {
            return;
        }
        match (waycost(route, e1), waycost(route, e2)) {
            (Ok(c1), Ok(c2)) => {
                min1 = min1.min(c1);
                min2 = min2.min(c2);
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut shared_optimum = false;
    for_each_route(e1.tasks(), e1.stations_per_task(), |route| {
        if shared_optimum {
            return;
        }
        let c1 = waycost(route, e1).expect("validated in first pass");
        let c2 = waycost(route, e2).expect("validated in first pass");
        if c1 == min1 && c2 == min2 {
            shared_optimum = true;
        }
    });
    Ok(!shared_optimum)
}
