//! Smart-factory environment: the station grid, Manhattan routing cost, and
//! the station-displacement change function.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("layout dimensions must all be at least 1 (tasks={tasks}, stations_per_task={stations_per_task}, width={width}, height={height})")]
    InvalidDimensions {
        tasks: usize,
        stations_per_task: usize,
        width: i64,
        height: i64,
    },
    #[error("station matrix must be rectangular and non-empty")]
    MalformedStations,
    #[error("station coordinates must be non-negative")]
    NegativeCoordinate,
    #[error("route has {got} entries, layout expects {expected}")]
    RouteLength { expected: usize, got: usize },
    #[error("station id {station} out of range for task {task} (stations per task: {stations_per_task})")]
    StationOutOfRange {
        task: usize,
        station: usize,
        stations_per_task: usize,
    },
    #[error("cannot move {requested} stations, layout only has {available}")]
    ChangeTooLarge { requested: usize, available: usize },
}

/// A point on the factory grid. Serialized as a `[x, y]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct Coord {
    pub x: i64,
    pub y: i64,
}

impl Coord {
    pub const fn new(x: i64, y: i64) -> Self {
        Coord { x, y }
    }

    pub const fn offset_by(self, delta: Coord) -> Self {
        Coord::new(self.x + delta.x, self.y + delta.y)
    }
}

impl From<(i64, i64)> for Coord {
    fn from((x, y): (i64, i64)) -> Self {
        Coord::new(x, y)
    }
}

impl From<Coord> for (i64, i64) {
    fn from(c: Coord) -> Self {
        (c.x, c.y)
    }
}

/// Manhattan distance between two grid points.
pub fn l1_distance(a: Coord, b: Coord) -> i64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

/// The environment: one row of interchangeable stations per task, visited in
/// task order starting from `start`.
///
/// Stations are addressed as `(task, station_id)`. After a change has been
/// applied, coordinates may lie outside the `width` x `height` bounds; they
/// stay non-negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct FactoryLayout {
    stations: Vec<Vec<Coord>>,
    width: i64,
    height: i64,
    start: Coord,
}

/// Wire form of a layout: `{n, m, width, height, start, stations}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutRepr {
    n: usize,
    m: usize,
    width: i64,
    height: i64,
    start: (i64, i64),
    stations: Vec<Vec<(i64, i64)>>,
}

impl TryFrom<LayoutRepr> for FactoryLayout {
    type Error = DomainError;

    fn try_from(repr: LayoutRepr) -> Result<Self, Self::Error> {
        let stations: Vec<Vec<Coord>> = repr
            .stations
            .iter()
            .map(|row| row.iter().map(|&p| Coord::from(p)).collect())
            .collect();
        if stations.len() != repr.n || stations.iter().any(|row| row.len() != repr.m) {
            return Err(DomainError::MalformedStations);
        }
        let layout = FactoryLayout::new(stations, repr.width, repr.height)?;
        Ok(layout.with_start(Coord::from(repr.start)))
    }
}

impl From<FactoryLayout> for LayoutRepr {
    fn from(layout: FactoryLayout) -> Self {
        LayoutRepr {
            n: layout.tasks(),
            m: layout.stations_per_task(),
            width: layout.width,
            height: layout.height,
            start: layout.start.into(),
            stations: layout
                .stations
                .iter()
                .map(|row| row.iter().map(|&c| c.into()).collect())
                .collect(),
        }
    }
}

impl FactoryLayout {
    /// Builds a layout from an explicit station matrix. The start point
    /// defaults to the grid corner `(0, 0)`.
    pub fn new(stations: Vec<Vec<Coord>>, width: i64, height: i64) -> Result<Self, DomainError> {
        if stations.is_empty() || stations[0].is_empty() {
            return Err(DomainError::MalformedStations);
        }
        let m = stations[0].len();
        if stations.iter().any(|row| row.len() != m) {
            return Err(DomainError::MalformedStations);
        }
        if width < 1 || height < 1 {
            return Err(DomainError::InvalidDimensions {
                tasks: stations.len(),
                stations_per_task: m,
                width,
                height,
            });
        }
        if stations.iter().flatten().any(|c| c.x < 0 || c.y < 0) {
            return Err(DomainError::NegativeCoordinate);
        }
        Ok(FactoryLayout {
            stations,
            width,
            height,
            start: Coord::new(0, 0),
        })
    }

    pub fn with_start(mut self, start: Coord) -> Self {
        self.start = start;
        self
    }

    /// Number of tasks (rows of the station matrix).
    pub fn tasks(&self) -> usize {
        self.stations.len()
    }

    /// Number of interchangeable stations per task (columns).
    pub fn stations_per_task(&self) -> usize {
        self.stations[0].len()
    }

    pub fn station_count(&self) -> usize {
        self.tasks() * self.stations_per_task()
    }

    pub fn station(&self, task: usize, id: usize) -> Coord {
        self.stations[task][id]
    }

    pub fn start(&self) -> Coord {
        self.start
    }

    pub fn width(&self) -> i64 {
        self.width
    }

    pub fn height(&self) -> i64 {
        self.height
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("layout serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Draws every station coordinate uniformly from
/// `{0..width-1} x {0..height-1}`. Duplicate positions are allowed.
///
/// Draw order is row-major, x before y, so a given rng seed always yields the
/// same layout.
pub fn generate_layout<R: Rng>(
    tasks: usize,
    stations_per_task: usize,
    width: i64,
    height: i64,
    rng: &mut R,
) -> Result<FactoryLayout, DomainError> {
    if tasks < 1 || stations_per_task < 1 || width < 1 || height < 1 {
        return Err(DomainError::InvalidDimensions {
            tasks,
            stations_per_task,
            width,
            height,
        });
    }
    let stations = (0..tasks)
        .map(|_| {
            (0..stations_per_task)
                .map(|_| {
                    let x = rng.random_range(0..width);
                    let y = rng.random_range(0..height);
                    Coord::new(x, y)
                })
                .collect()
        })
        .collect();
    FactoryLayout::new(stations, width, height)
}

/// Total Manhattan path length from the start point through the chosen
/// station of each task, in task order. There is no return leg.
pub fn waycost(route: &[usize], layout: &FactoryLayout) -> Result<i64, DomainError> {
    let n = layout.tasks();
    let m = layout.stations_per_task();
    if route.len() != n {
        return Err(DomainError::RouteLength {
            expected: n,
            got: route.len(),
        });
    }
    let mut cost = 0i64;
    let mut at = layout.start();
    for (task, &id) in route.iter().enumerate() {
        if id >= m {
            return Err(DomainError::StationOutOfRange {
                task,
                station: id,
                stations_per_task: m,
            });
        }
        let next = layout.station(task, id);
        cost += l1_distance(at, next);
        at = next;
    }
    Ok(cost)
}

/// Which stations a change function displaced, and by how much.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    /// `(task, station_id)` pairs, distinct, sorted.
    pub moved: Vec<(usize, usize)>,
    pub offset: Coord,
}

impl ChangeRecord {
    pub fn empty() -> Self {
        ChangeRecord {
            moved: Vec::new(),
            offset: Coord::new(0, 0),
        }
    }
}

/// Displaces `amount` distinct stations, chosen uniformly without
/// replacement over the whole matrix, by `offset`. Returns the changed
/// layout and the change record; the input layout is untouched.
///
/// Sampling is a partial Fisher-Yates shuffle over flattened station
/// indices, so the choice depends only on the rng stream.
pub fn apply_change<R: Rng>(
    layout: &FactoryLayout,
    amount: usize,
    offset: Coord,
    rng: &mut R,
) -> Result<(FactoryLayout, ChangeRecord), DomainError> {
    let total = layout.station_count();
    if amount > total {
        return Err(DomainError::ChangeTooLarge {
            requested: amount,
            available: total,
        });
    }
    let m = layout.stations_per_task();
    let mut indices: Vec<usize> = (0..total).collect();
    for k in 0..amount {
        let j = rng.random_range(k..total);
        indices.swap(k, j);
    }
    let mut moved: Vec<(usize, usize)> = indices[..amount]
        .iter()
        .map(|&idx| (idx / m, idx % m))
        .collect();
    moved.sort_unstable();

    let mut changed = layout.clone();
    for &(task, id) in &moved {
        changed.stations[task][id] = changed.stations[task][id].offset_by(offset);
    }
    Ok((changed, ChangeRecord { moved, offset }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Visits all m^n routes in lexicographic order. Test-local on purpose:
    /// the oracle module has its own enumerator and must not back these
    /// checks.
    fn for_each_route(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
        let mut route = vec![0usize; n];
        loop {
            f(&route);
            let mut pos = n;
            while pos > 0 {
                pos -= 1;
                route[pos] += 1;
                if route[pos] < m {
                    break;
                }
                route[pos] = 0;
                if pos == 0 {
                    return;
                }
            }
        }
    }

    #[test]
    fn l1_identical_points_is_zero() {
        assert_eq!(l1_distance(Coord::new(0, 0), Coord::new(0, 0)), 0);
    }

    #[test]
    fn l1_matches_definition() {
        assert_eq!(l1_distance(Coord::new(0, 0), Coord::new(3, 4)), 7);
    }

    #[test]
    fn l1_in_grid_to_moved_station() {
        // In-grid corner to a station displaced by (2500, 2500).
        assert_eq!(
            l1_distance(Coord::new(500, 500), Coord::new(3000, 3000)),
            5000
        );
    }

    #[test]
    fn generate_layout_draws_within_bounds() {
        let layout = generate_layout(5, 5, 500, 500, &mut rng(7)).unwrap();
        assert_eq!(layout.tasks(), 5);
        assert_eq!(layout.stations_per_task(), 5);
        assert_eq!(layout.station_count(), 25);
        for task in 0..5 {
            for id in 0..5 {
                let c = layout.station(task, id);
                assert!((0..500).contains(&c.x) && (0..500).contains(&c.y));
            }
        }
        assert_eq!(layout.start(), Coord::new(0, 0));
    }

    #[test]
    fn generate_layout_single_cell_grid() {
        let layout = generate_layout(1, 1, 1, 1, &mut rng(123)).unwrap();
        assert_eq!(layout.station(0, 0), Coord::new(0, 0));
    }

    #[test]
    fn generate_layout_is_deterministic() {
        let a = generate_layout(5, 5, 500, 500, &mut rng(99)).unwrap();
        let b = generate_layout(5, 5, 500, 500, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_layout_rejects_zero_dimensions() {
        assert!(generate_layout(0, 5, 500, 500, &mut rng(1)).is_err());
        assert!(generate_layout(5, 0, 500, 500, &mut rng(1)).is_err());
        assert!(generate_layout(5, 5, 0, 500, &mut rng(1)).is_err());
        assert!(generate_layout(5, 5, 500, 0, &mut rng(1)).is_err());
    }

    #[test]
    fn waycost_all_stations_at_start_is_zero() {
        let stations = vec![vec![Coord::new(0, 0)]; 4];
        let layout = FactoryLayout::new(stations, 10, 10).unwrap();
        assert_eq!(waycost(&[0, 0, 0, 0], &layout).unwrap(), 0);
    }

    #[test]
    fn waycost_hand_summed_legs() {
        // Legs: 10 + 5 + 10 + 20 + 20 = 65.
        let points = [(10, 0), (10, 5), (20, 5), (20, 25), (0, 25)];
        let stations = points
            .iter()
            .map(|&(x, y)| vec![Coord::new(x, y)])
            .collect();
        let layout = FactoryLayout::new(stations, 30, 30).unwrap();
        assert_eq!(waycost(&[0; 5], &layout).unwrap(), 65);
    }

    #[test]
    fn waycost_rejects_bad_routes() {
        let layout = generate_layout(3, 2, 10, 10, &mut rng(5)).unwrap();
        assert_eq!(
            waycost(&[0, 1], &layout),
            Err(DomainError::RouteLength {
                expected: 3,
                got: 2
            })
        );
        assert_eq!(
            waycost(&[0, 2, 1], &layout),
            Err(DomainError::StationOutOfRange {
                task: 1,
                station: 2,
                stations_per_task: 2
            })
        );
    }

    #[test]
    fn apply_change_zero_amount_is_identity() {
        let layout = generate_layout(5, 5, 500, 500, &mut rng(11)).unwrap();
        let (changed, record) =
            apply_change(&layout, 0, Coord::new(2500, 2500), &mut rng(12)).unwrap();
        assert_eq!(changed, layout);
        assert!(record.moved.is_empty());
    }

    #[test]
    fn apply_change_moves_exactly_the_sampled_stations() {
        let layout = generate_layout(5, 5, 500, 500, &mut rng(21)).unwrap();
        let offset = Coord::new(2500, 2500);
        let (changed, record) = apply_change(&layout, 2, offset, &mut rng(22)).unwrap();
        assert_eq!(record.moved.len(), 2);
        assert!(record.moved[0] < record.moved[1]);
        let mut differing = 0;
        for task in 0..5 {
            for id in 0..5 {
                let before = layout.station(task, id);
                let after = changed.station(task, id);
                if record.moved.contains(&(task, id)) {
                    assert_eq!(after, before.offset_by(offset));
                    differing += 1;
                } else {
                    assert_eq!(after, before);
                }
            }
        }
        assert_eq!(differing, 2);
    }

    #[test]
    fn apply_change_rejects_oversized_amount() {
        let layout = generate_layout(2, 2, 10, 10, &mut rng(31)).unwrap();
        assert_eq!(
            apply_change(&layout, 5, Coord::new(1, 1), &mut rng(32)),
            Err(DomainError::ChangeTooLarge {
                requested: 5,
                available: 4
            })
        );
    }

    #[test]
    fn apply_change_is_deterministic() {
        let layout = generate_layout(5, 5, 500, 500, &mut rng(41)).unwrap();
        let a = apply_change(&layout, 3, Coord::new(2500, 2500), &mut rng(42)).unwrap();
        let b = apply_change(&layout, 3, Coord::new(2500, 2500), &mut rng(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_geometry_route_costs_split_on_moved_stations() {
        // Full enumeration of all 3125 routes of a 5x5 instance: routes
        // through a moved station cost at least 4000, routes avoiding all
        // moved stations stay within n*(width+height) and keep their exact
        // pre-change cost.
        let layout = generate_layout(5, 5, 500, 500, &mut rng(51)).unwrap();
        let (changed, record) =
            apply_change(&layout, 3, Coord::new(2500, 2500), &mut rng(52)).unwrap();
        let mut visited = 0u64;
        for_each_route(5, 5, |route| {
            visited += 1;
            let before = waycost(route, &layout).unwrap();
            let after = waycost(route, &changed).unwrap();
            let uses_moved = route
                .iter()
                .enumerate()
                .any(|(task, &id)| record.moved.contains(&(task, id)));
            if uses_moved {
                assert!(after >= 4000, "route {route:?} cost {after}");
            } else {
                assert_eq!(after, before);
                assert!(after <= 5 * (500 + 500));
            }
        });
        assert_eq!(visited, 3125);
    }

    #[test]
    fn layout_json_shape_round_trips() {
        let layout = generate_layout(2, 3, 40, 30, &mut rng(61)).unwrap();
        let json = layout.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["n"], 2);
        assert_eq!(value["m"], 3);
        assert_eq!(value["width"], 40);
        assert_eq!(value["height"], 30);
        assert_eq!(value["start"], serde_json::json!([0, 0]));
        assert_eq!(value["stations"].as_array().unwrap().len(), 2);
        assert_eq!(value["stations"][0].as_array().unwrap().len(), 3);
        assert_eq!(FactoryLayout::from_json(&json).unwrap(), layout);
    }

    #[test]
    fn layout_json_rejects_shape_mismatch() {
        let json =
            r#"{"n":2,"m":2,"width":10,"height":10,"start":[0,0],"stations":[[[1,1],[2,2]]]}"#;
        assert!(FactoryLayout::from_json(json).is_err());
    }

    proptest! {
        #[test]
        fn waycost_is_non_negative(seed in 0u64..10_000) {
            let mut r = rng(seed);
            let n = r.random_range(1..=4usize);
            let m = r.random_range(1..=4usize);
            let layout = generate_layout(n, m, 50, 50, &mut r).unwrap();
            let route: Vec<usize> = (0..n).map(|_| r.random_range(0..m)).collect();
            prop_assert!(waycost(&route, &layout).unwrap() >= 0);
        }

        #[test]
        fn change_preserves_costs_of_untouched_routes(seed in 0u64..10_000) {
            let mut r = rng(seed);
            let n = r.random_range(1..=3usize);
            let m = r.random_range(1..=3usize);
            let layout = generate_layout(n, m, 50, 50, &mut r).unwrap();
            let amount = r.random_range(0..=n * m);
            let (changed, record) =
                apply_change(&layout, amount, Coord::new(2500, 2500), &mut r).unwrap();
            prop_assert_eq!(record.moved.len(), amount);
            for_each_route(n, m, |route| {
                let uses_moved = route
                    .iter()
                    .enumerate()
                    .any(|(task, &id)| record.moved.contains(&(task, id)));
                let before = waycost(route, &layout).unwrap();
                let after = waycost(route, &changed).unwrap();
                if !uses_moved {
                    assert_eq!(before, after);
                }
            });
        }
    }
}
