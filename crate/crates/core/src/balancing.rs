//! Event time and balanced subpanels.
//!
//! A unit's event time starts at its first employed observation with valid
//! incomes and increases by one per consecutive calendar year. The first gap
//! (a missing year, a non-employed year, or unusable incomes) ends the unit's
//! run; everything after it is discarded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    /// All units, all event times of their first uninterrupted run.
    Weak,
    /// Only units observed at every `t = 1..T`, truncated to exactly `T` rows.
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub horizon: u32,
    pub mode: BalanceMode,
}

impl BalanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("balance.horizon must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn assign_event_time(panel: &Panel) -> Panel {
    let obs = panel.observations();
    let mut kept = Vec::new();
    let mut times = Vec::new();
    for range in panel.unit_ranges() {
        let usable = |i: usize| obs[i].employed && obs[i].has_valid_incomes();
        let Some(first) = range.clone().find(|&i| usable(i)) else {
            continue;
        };
        let mut t = 1u32;
        kept.push(obs[first].clone());
        times.push(t);
        for i in (first + 1)..range.end {
            if obs[i].period != obs[i - 1].period + 1 || !usable(i) {
                break;
            }
            t += 1;
            kept.push(obs[i].clone());
            times.push(t);
        }
    }
    Panel::with_event_times(kept, times)
}

pub fn build_balanced(panel: &Panel, spec: BalanceSpec) -> Result<Panel> {
    spec.validate()?;
    if !panel.has_event_time() {
        return Err(Error::Data("build_balanced requires event time; assign it first".into()));
    }
    match spec.mode {
        BalanceMode::Weak => Ok(panel.clone()),
        BalanceMode::Strong => {
            let mut complete = std::collections::HashSet::new();
            for range in panel.unit_ranges() {
                let mut seen = vec![false; spec.horizon as usize];
                for i in range.clone() {
                    if let Some(t) = panel.event_time(i) {
                        if (1..=spec.horizon).contains(&t) {
                            seen[t as usize - 1] = true;
                        }
                    }
                }
                if seen.iter().all(|s| *s) {
                    complete.insert(panel.observations()[range.start].unit_id.clone());
                }
            }
            Ok(panel.filter(|o, t| {
                complete.contains(&o.unit_id) && t.is_some_and(|t| t <= spec.horizon)
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::LinkedObservation;
    use proptest::prelude::*;

    fn employed(unit: &str, year: i32) -> LinkedObservation {
        LinkedObservation::new(unit, year).with_incomes(1000.0, 1100.0)
    }

    fn unemployed(unit: &str, year: i32) -> LinkedObservation {
        let mut o = LinkedObservation::new(unit, year);
        o.employed = false;
        o
    }

    fn times(p: &Panel) -> Vec<(String, i32, u32)> {
        p.iter_timed().map(|(o, t)| (o.unit_id.clone(), o.period, t.unwrap())).collect()
    }

    #[test]
    fn consecutive_run_numbered_from_one() {
        let p = Panel::from_records((2015..=2018).map(|y| employed("a", y)).collect()).unwrap();
        let out = assign_event_time(&p);
        assert_eq!(
            times(&out),
            (2015..=2018).zip(1..).map(|(y, t)| ("a".to_string(), y, t)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn observations_after_a_gap_are_discarded() {
        let recs = vec![employed("a", 2015), employed("a", 2016), unemployed("a", 2017), employed("a", 2018)];
        let out = assign_event_time(&Panel::from_records(recs).unwrap());
        assert_eq!(times(&out), vec![("a".into(), 2015, 1), ("a".into(), 2016, 2)]);

        let recs = vec![employed("b", 2015), employed("b", 2016), employed("b", 2018)];
        let out = assign_event_time(&Panel::from_records(recs).unwrap());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn run_starts_at_first_employment() {
        let recs = vec![unemployed("a", 2014), employed("a", 2015), employed("a", 2016)];
        let out = assign_event_time(&Panel::from_records(recs).unwrap());
        assert_eq!(times(&out), vec![("a".into(), 2015, 1), ("a".into(), 2016, 2)]);
    }

    #[test]
    fn never_employed_unit_is_absent() {
        let recs = vec![unemployed("a", 2015), employed("b", 2015)];
        let out = assign_event_time(&Panel::from_records(recs).unwrap());
        assert_eq!(out.unit_ids(), vec!["b"]);
    }

    #[test]
    fn strong_balance_keeps_long_runs_truncated() {
        let mut recs: Vec<_> = (2010..2015).map(|y| employed("long", y)).collect();
        recs.extend((2010..2013).map(|y| employed("short", y)));
        let timed = assign_event_time(&Panel::from_records(recs).unwrap());
        let strong = build_balanced(&timed, BalanceSpec { horizon: 4, mode: BalanceMode::Strong }).unwrap();
        assert_eq!(strong.unit_ids(), vec!["long"]);
        assert_eq!(strong.iter_timed().map(|(_, t)| t.unwrap()).collect::<Vec<_>>(), vec![1, 2, 3, 4]);

        let weak = build_balanced(&timed, BalanceSpec { horizon: 4, mode: BalanceMode::Weak }).unwrap();
        assert_eq!(weak.unit_ids(), vec!["long", "short"]);

        let too_long = build_balanced(&timed, BalanceSpec { horizon: 9, mode: BalanceMode::Strong }).unwrap();
        assert!(too_long.is_empty());
    }

    #[test]
    fn strong_t1_equals_weak_restricted_to_t1() {
        let recs = vec![employed("a", 2000), employed("a", 2001), employed("b", 2003)];
        let timed = assign_event_time(&Panel::from_records(recs).unwrap());
        let strong = build_balanced(&timed, BalanceSpec { horizon: 1, mode: BalanceMode::Strong }).unwrap();
        let weak = build_balanced(&timed, BalanceSpec { horizon: 1, mode: BalanceMode::Weak }).unwrap();
        assert_eq!(strong, weak.filter(|_, t| t == Some(1)));
    }

    #[test]
    fn unassigned_panel_is_rejected() {
        let p = Panel::from_records(vec![employed("a", 2000)]).unwrap();
        assert!(build_balanced(&p, BalanceSpec { horizon: 1, mode: BalanceMode::Weak }).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<LinkedObservation>> {
        proptest::collection::btree_set((0u8..6, 2000i32..2012), 0..50).prop_flat_map(|keys| {
            let n = keys.len();
            (Just(keys), proptest::collection::vec(any::<bool>(), n)).prop_map(|(keys, emp)| {
                keys.into_iter()
                    .zip(emp)
                    .map(|((u, y), e)| if e { employed(&format!("u{u}"), y) } else { unemployed(&format!("u{u}"), y) })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn balancing_properties(mut recs in arb_records(), horizon in 1u32..5, seed in any::<u64>()) {
            let timed = assign_event_time(&Panel::from_records(recs.clone()).unwrap());
            // input order does not matter
            let k = recs.len().max(1);
            recs.rotate_left((seed as usize) % k);
            recs.reverse();
            prop_assert_eq!(&assign_event_time(&Panel::from_records(recs).unwrap()), &timed);

            let weak = build_balanced(&timed, BalanceSpec { horizon, mode: BalanceMode::Weak }).unwrap();
            let strong = build_balanced(&timed, BalanceSpec { horizon, mode: BalanceMode::Strong }).unwrap();
            let weak_keys: std::collections::HashSet<_> = weak.observations().iter().map(|o| (o.unit_id.clone(), o.period)).collect();
            for o in strong.observations() {
                prop_assert!(weak_keys.contains(&(o.unit_id.clone(), o.period)));
            }
            for r in strong.unit_ranges() {
                prop_assert_eq!(r.len(), horizon as usize);
                let obs = &strong.observations()[r];
                prop_assert!(obs.windows(2).all(|w| w[1].period == w[0].period + 1));
            }
        }
    }
}
