//! One-to-one device/sub-channel assignment by swap matching.
//!
//! Tables are indexed `[channel][device]`. Rectangular tables are padded to square: virtual
//! devices cost nothing on any channel, and a real device on a virtual channel is infeasible
//! (it cannot transmit). Totals compare lexicographically by (infeasible count, energy sum),
//! so a swap that turns an infeasible pair feasible always counts as an improvement.

use std::cmp::Ordering;
use std::fmt;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{AllocationInstance, AllocationMode, AllocationResult};
use crate::error::{Error, Result};
use crate::wireless::{ChannelState, DeviceProfile, SystemParams};

/// Largest table size [`exhaustive_matching`] will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Energy of one (channel, device) pair. `Infeasible` is worse than every finite cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cost {
    Finite(f64),
    Infeasible,
}

impl Cost {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infeasible => None,
        }
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.total_cmp(b),
            (Cost::Finite(_), Cost::Infeasible) => Ordering::Less,
            (Cost::Infeasible, Cost::Finite(_)) => Ordering::Greater,
            (Cost::Infeasible, Cost::Infeasible) => Ordering::Equal,
        }
    }
}

impl From<&AllocationResult> for Cost {
    fn from(r: &AllocationResult) -> Self {
        r.energy().map_or(Cost::Infeasible, Cost::Finite)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infeasible => f.write_str("inf"),
        }
    }
}

/// Aggregate cost of a matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Total {
    pub infeasible: usize,
    pub energy: f64,
}

impl Eq for Total {}

impl PartialOrd for Total {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Total {
    fn cmp(&self, other: &Self) -> Ordering {
        self.infeasible
            .cmp(&other.infeasible)
            .then(self.energy.total_cmp(&other.energy))
    }
}

/// Square cost table with a record of which rows and columns are real.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    size: usize,
    real_channels: usize,
    real_devices: usize,
    entries: Vec<Cost>,
}

impl EnergyTable {
    /// Builds a padded table from `rows[channel][device]`.
    pub fn from_rows(rows: &[Vec<Cost>]) -> Result<Self> {
        let real_channels = rows.len();
        let real_devices = rows.first().map_or(0, Vec::len);
        if real_channels == 0 || real_devices == 0 {
            return Err(Error::InvalidArgument("energy table is empty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != real_devices) {
            return Err(Error::DimensionMismatch {
                expected: real_devices,
                actual: bad.len(),
            });
        }
        for c in rows.iter().flatten() {
            if let Cost::Finite(v) = c {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidArgument(format!("invalid energy entry {v}")));
                }
            }
        }
        let size = real_channels.max(real_devices);
        let mut entries = Vec::with_capacity(size * size);
        for k in 0..size {
            for n in 0..size {
                entries.push(match rows.get(k) {
                    _ if n >= real_devices => Cost::Finite(0.0),
                    Some(row) => row[n],
                    None => Cost::Infeasible,
                });
            }
        }
        Ok(Self {
            size,
            real_channels,
            real_devices,
            entries,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn real_channels(&self) -> usize {
        self.real_channels
    }

    pub fn real_devices(&self) -> usize {
        self.real_devices
    }

    pub fn get(&self, channel: usize, device: usize) -> Cost {
        self.entries[channel * self.size + device]
    }

    pub fn total(&self, matching: &Matching) -> Total {
        let mut total = Total {
            infeasible: 0,
            energy: 0.0,
        };
        for (device, &channel) in matching.channel_of.iter().enumerate() {
            match self.get(channel, device) {
                Cost::Finite(v) => total.energy += v,
                Cost::Infeasible => total.infeasible += 1,
            }
        }
        total
    }
}

/// Allocation for every (channel, candidate) pair and the resulting padded cost table.
///
/// `allocations[k][i]` belongs to channel `k` and `candidates[i]`; the table's device index is
/// the position `i`, not the device id.
#[derive(Debug, Clone)]
pub struct BuiltTable {
    pub table: EnergyTable,
    pub allocations: Vec<Vec<AllocationResult>>,
}

pub fn build_table(
    candidates: &[DeviceProfile],
    channels: &ChannelState,
    params: &SystemParams,
    mode: AllocationMode,
) -> Result<BuiltTable> {
    let allocations: Vec<Vec<AllocationResult>> = (0..channels.channels())
        .map(|k| {
            candidates
                .iter()
                .map(|dev| mode.allocate(&AllocationInstance::new(dev, channels.gain(k, dev.id), params)))
                .collect()
        })
        .collect();
    let rows: Vec<Vec<Cost>> = allocations
        .iter()
        .map(|row| row.iter().map(Cost::from).collect())
        .collect();
    Ok(BuiltTable {
        table: EnergyTable::from_rows(&rows)?,
        allocations,
    })
}

/// Parses a table file: one row per channel, whitespace or comma separated. `inf`, `x` and
/// `-` mark infeasible pairs. Blank lines and `#` comments are skipped.
pub fn parse_table(text: &str) -> Result<EnergyTable> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| match t.to_ascii_lowercase().as_str() {
                "inf" | "infeasible" | "x" | "-" => Ok(Cost::Infeasible),
                _ => t.parse::<f64>().map(Cost::Finite).map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("'{t}': {e}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {first} entries, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    EnergyTable::from_rows(&rows)
}

/// Bijection from devices to channels of a square table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    channel_of: Vec<usize>,
}

impl Matching {
    pub fn from_channels(channel_of: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; channel_of.len()];
        for &k in &channel_of {
            if k >= seen.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidArgument(format!(
                    "{channel_of:?} is not a permutation"
                )));
            }
        }
        Ok(Self { channel_of })
    }

    pub fn identity(size: usize) -> Self {
        Self {
            channel_of: (0..size).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let mut channel_of: Vec<usize> = (0..size).collect();
        channel_of.shuffle(rng);
        Self { channel_of }
    }

    pub fn channel_of(&self, device: usize) -> usize {
        self.channel_of[device]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.channel_of
    }

    pub fn len(&self) -> usize {
        self.channel_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_of.is_empty()
    }

    /// Exchanges the channels of two devices.
    pub fn swap(&mut self, n1: usize, n2: usize) -> Result<()> {
        for n in [n1, n2] {
            if n >= self.channel_of.len() {
                return Err(Error::UnmatchedDevice(n));
            }
        }
        self.channel_of.swap(n1, n2);
        Ok(())
    }
}

/// Whether exchanging the channels of `n1` and `n2` leaves neither worse off and at least one
/// strictly better off.
pub fn is_blocking_pair(table: &EnergyTable, matching: &Matching, n1: usize, n2: usize) -> bool {
    if n1 == n2 {
        return false;
    }
    let (k1, k2) = (matching.channel_of(n1), matching.channel_of(n2));
    let before = (table.get(k1, n1), table.get(k2, n2));
    let after = (table.get(k2, n1), table.get(k1, n2));
    after.0 <= before.0 && after.1 <= before.1 && (after.0 < before.0 || after.1 < before.1)
}

/// First blocking pair in scan order, if any.
pub fn find_blocking_pair(table: &EnergyTable, matching: &Matching) -> Option<(usize, usize)> {
    let n = table.size();
    (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .find(|&(a, b)| is_blocking_pair(table, matching, a, b))
}

/// Whether no blocking pair exists.
pub fn stability_check(table: &EnergyTable, matching: &Matching) -> bool {
    find_blocking_pair(table, matching).is_none()
}

/// Result of [`run_matching`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingOutcome {
    pub matching: Matching,
    /// Full scans over all devices, including the final one that found no swap.
    pub cycles: usize,
    /// Total before any swap, then after each swap.
    pub trace: Vec<Total>,
    /// Total at the end of each cycle.
    pub cycle_trace: Vec<Total>,
}

/// Swap matching from `initial`.
///
/// Each cycle scans devices in ascending order; a device swaps with the first partner forming
/// a blocking pair. Stops after a cycle with no swap.
pub fn run_matching_from(table: &EnergyTable, initial: Matching) -> Result<MatchingOutcome> {
    if initial.len() != table.size() {
        return Err(Error::DimensionMismatch {
            expected: table.size(),
            actual: initial.len(),
        });
    }
    let mut matching = initial;
    let mut trace = vec![table.total(&matching)];
    let n = table.size();
    let mut cycles = 0;
    let mut cycle_trace = Vec::new();
    loop {
        cycles += 1;
        let mut swapped = false;
        for n1 in 0..n {
            if let Some(n2) = (0..n).find(|&n2| is_blocking_pair(table, &matching, n1, n2)) {
                matching.channel_of.swap(n1, n2);
                trace.push(table.total(&matching));
                swapped = true;
            }
        }
        cycle_trace.push(*trace.last().expect("trace starts non-empty"));
        if !swapped {
            break;
        }
    }
    Ok(MatchingOutcome {
        matching,
        cycles,
        trace,
        cycle_trace,
    })
}

/// Swap matching from a random initial permutation.
pub fn run_matching<R: Rng + ?Sized>(table: &EnergyTable, rng: &mut R) -> MatchingOutcome {
    let initial = Matching::random(table.size(), rng);
    run_matching_from(table, initial).expect("initial matching has table size")
}

/// Minimum-total matching by enumerating all permutations. Ties keep the
/// lexicographically first permutation.
pub fn exhaustive_matching(table: &EnergyTable) -> Result<(Matching, Total)> {
    let n = table.size();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count: (1..=n as u128).product(),
            limit: (1..=EXHAUSTIVE_LIMIT as u128).product(),
        });
    }
    let mut best: Option<(Matching, Total)> = None;
    for perm in (0..n).permutations(n) {
        let candidate = Matching { channel_of: perm };
        let total = table.total(&candidate);
        if best.as_ref().is_none_or(|(_, t)| total < *t) {
            best = Some((candidate, total));
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Real devices on real channels with a finite cost, as `(device, channel)`, by device.
pub fn prune(table: &EnergyTable, matching: &Matching) -> Vec<(usize, usize)> {
    (0..table.real_devices())
        .map(|n| (n, matching.channel_of(n)))
        .filter(|&(n, k)| k < table.real_channels() && matches!(table.get(k, n), Cost::Finite(_)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use Cost::{Finite as F, Infeasible as X};

    #[test]
    fn two_by_two_blocking_swap() {
        let table = EnergyTable::from_rows(&[vec![F(1.0), F(2.0)], vec![F(3.0), F(1.0)]]).unwrap();
        let crossed = Matching::from_channels(vec![1, 0]).unwrap();
        assert!(is_blocking_pair(&table, &crossed, 0, 1));
        assert_eq!(table.total(&crossed).energy, 5.0);
        let out = run_matching_from(&table, crossed).unwrap();
        assert_eq!(out.matching.as_slice(), &[0, 1]);
        assert_eq!(out.trace.last().unwrap().energy, 2.0);
        assert_eq!(out.cycles, 2);
        assert_eq!(out.cycle_trace.len(), 2);
        assert!(stability_check(&table, &out.matching));
    }

    #[test]
    fn single_entry_table_stops_after_one_cycle() {
        let table = EnergyTable::from_rows(&[vec![F(7.0)]]).unwrap();
        let out = run_matching(&table, &mut seeded(1));
        assert_eq!(out.cycles, 1);
        assert_eq!(
            out.trace,
            vec![Total {
                infeasible: 0,
                energy: 7.0
            }]
        );
    }

    #[test]
    fn infeasible_orders_above_finite() {
        assert!(X > F(f64::MAX));
        assert_eq!(X, X);
        assert!(
            Total {
                infeasible: 0,
                energy: 1e300
            } < Total {
                infeasible: 1,
                energy: 0.0
            }
        );
    }

    #[test]
    fn padding_virtual_rows_and_columns() {
        // 1 channel, 2 devices: a virtual channel is added.
        let t = EnergyTable::from_rows(&[vec![F(1.0), F(2.0)]]).unwrap();
        assert_eq!(t.size(), 2);
        assert_eq!(t.get(1, 0), X);
        // 2 channels, 1 device: a virtual device with zero cost is added.
        let t = EnergyTable::from_rows(&[vec![F(1.0)], vec![F(2.0)]]).unwrap();
        assert_eq!(t.get(0, 1), F(0.0));
        assert_eq!(t.get(1, 1), F(0.0));
        let out = run_matching_from(&t, Matching::from_channels(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(prune(&t, &out.matching), vec![(0, 0)]);
    }

    #[test]
    fn swap_rescues_an_infeasible_pair() {
        let table = EnergyTable::from_rows(&[vec![X, F(5.0)], vec![F(9.0), F(1.0)]]).unwrap();
        let m = Matching::identity(2);
        assert_eq!(table.total(&m).infeasible, 1);
        // device 0 gains feasibility, device 1 goes 1 -> 5: device 1 is worse, so not blocking.
        assert!(!is_blocking_pair(&table, &m, 0, 1));
        let (best, total) = exhaustive_matching(&table).unwrap();
        assert_eq!(best.as_slice(), &[1, 0]);
        assert_eq!(
            total,
            Total {
                infeasible: 0,
                energy: 14.0
            }
        );
        assert_eq!(prune(&table, &m), vec![(1, 1)]);
    }

    #[test]
    fn swap_is_an_involution() {
        let mut m = Matching::from_channels(vec![2, 0, 1]).unwrap();
        let orig = m.clone();
        m.swap(1, 1).unwrap();
        assert_eq!(m, orig);
        m.swap(0, 2).unwrap();
        assert_eq!(m.as_slice(), &[1, 0, 2]);
        m.swap(2, 0).unwrap();
        assert_eq!(m, orig);
        assert!(matches!(m.swap(0, 3), Err(Error::UnmatchedDevice(3))));
        assert_eq!(m, orig);
    }

    #[test]
    fn equal_costs_never_block() {
        let table = EnergyTable::from_rows(&[vec![F(1.0), F(1.0)], vec![F(1.0), F(1.0)]]).unwrap();
        assert!(!is_blocking_pair(&table, &Matching::identity(2), 0, 1));
        let sentinel = EnergyTable::from_rows(&[vec![F(1.0), X], vec![X, F(1.0)]]).unwrap();
        assert!(!is_blocking_pair(&sentinel, &Matching::identity(2), 0, 1));
        assert!(stability_check(
            &EnergyTable::from_rows(&[vec![X]]).unwrap(),
            &Matching::identity(1)
        ));
    }

    #[test]
    fn permutation_validation() {
        assert!(Matching::from_channels(vec![0, 0]).is_err());
        assert!(Matching::from_channels(vec![0, 2]).is_err());
        assert!(Matching::from_channels(vec![1, 0]).is_ok());
    }

    #[test]
    fn parser_reads_rows_as_channels() {
        let t = parse_table("# channels x devices\n1, 2, inf\n3 x 4\n").unwrap();
        assert_eq!(t.size(), 3);
        assert_eq!(t.real_channels(), 2);
        assert_eq!(t.get(0, 2), X);
        assert_eq!(t.get(1, 0), F(3.0));
        assert_eq!(t.get(2, 0), X);
        assert!(matches!(
            parse_table("1 2\n3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_table("1 zz\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_table("").is_err());
    }

    #[test]
    fn exhaustive_guard() {
        let rows = vec![vec![F(1.0); 9]; 9];
        let t = EnergyTable::from_rows(&rows).unwrap();
        assert!(matches!(
            exhaustive_matching(&t),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    fn table_strategy() -> impl Strategy<Value = Vec<Vec<Cost>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(k, n)| {
            let entry = prop_oneof![
                4 => (0.0f64..10.0).prop_map(Cost::Finite),
                1 => Just(Cost::Infeasible),
            ];
            prop::collection::vec(prop::collection::vec(entry, n), k)
        })
    }

    proptest! {
        #[test]
        fn swap_matching_terminates_stable_and_improving(rows in table_strategy(), seed in 0u64..1000) {
            let table = EnergyTable::from_rows(&rows).unwrap();
            let out = run_matching(&table, &mut seeded(seed));
            prop_assert!(stability_check(&table, &out.matching));
            for w in out.trace.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
            let (_, best) = exhaustive_matching(&table).unwrap();
            prop_assert!(best <= *out.trace.last().unwrap());
            for (n, k) in prune(&table, &out.matching) {
                prop_assert!(n < table.real_devices() && k < table.real_channels());
                prop_assert!(table.get(k, n).finite().is_some());
            }
        }
    }
}
