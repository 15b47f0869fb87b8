//! Per-vehicle delay components and passenger-weighted aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::vehicle::VehicleClass;

/// Delay ledger entry for one vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord<T> {
    pub id: u64,
    pub class: VehicleClass,
    pub passengers: u32,
    pub depart_wanted: T,
    pub depart_actual: Option<T>,
    pub exit_time: Option<T>,
    /// Free-flow travel time D_t.
    pub free_flow_time: T,
}

impl<T: Scalar> VehicleRecord<T> {
    fn departed(&self) -> Result<T> {
        self.depart_actual.ok_or(Error::IncompleteRecord {
            id: self.id,
            missing: "depart_actual",
        })
    }

    fn exited(&self) -> Result<T> {
        self.exit_time.ok_or(Error::IncompleteRecord {
            id: self.id,
            missing: "exit_time",
        })
    }

    /// Actual travel time D_a.
    pub fn travel_time(&self) -> Result<T> {
        Ok(self.exited()? - self.departed()?)
    }
}

/// D_a − D_t.
pub fn time_loss<T: Scalar>(r: &VehicleRecord<T>) -> Result<T> {
    Ok(r.travel_time()? - r.free_flow_time)
}

/// Waiting time before entering the road.
pub fn depart_delay<T: Scalar>(r: &VehicleRecord<T>) -> Result<T> {
    Ok(r.departed()? - r.depart_wanted)
}

/// Vehicle delay: time loss plus depart delay.
pub fn vehicle_delay<T: Scalar>(r: &VehicleRecord<T>) -> Result<T> {
    Ok(time_loss(r)? + depart_delay(r)?)
}

/// Average passenger delay: passenger-weighted mean of vehicle delay.
pub fn apd<T: Scalar>(records: &[VehicleRecord<T>]) -> Result<T> {
    if records.is_empty() {
        return Err(Error::EmptyInput("apd needs at least one record"));
    }
    let mut weighted = T::zero();
    let mut passengers = T::zero();
    for r in records {
        let p = T::from_u32(r.passengers).expect("u32 fits");
        weighted = weighted + vehicle_delay(r)? * p;
        passengers = passengers + p;
    }
    Ok(weighted / passengers)
}

/// Row key of the grouped time-loss table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimeLossGroup {
    /// All human-driven vehicles, regardless of occupancy.
    Hdv,
    Cav { passengers: u32 },
    Bus,
}

impl std::fmt::Display for TimeLossGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeLossGroup::Hdv => f.write_str("HDV"),
            TimeLossGroup::Cav { passengers } => write!(f, "CAV_{passengers}"),
            TimeLossGroup::Bus => f.write_str("Bus"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

pub fn group_of<T>(r: &VehicleRecord<T>) -> TimeLossGroup {
    match r.class {
        VehicleClass::Hdv => TimeLossGroup::Hdv,
        VehicleClass::Cav => TimeLossGroup::Cav {
            passengers: r.passengers,
        },
        VehicleClass::Bus => TimeLossGroup::Bus,
    }
}

/// Mean time loss per group: one HDV row, one CAV row per passenger count,
/// one bus row when buses are present.
pub fn group_time_loss<T: Scalar>(records: &[VehicleRecord<T>]) -> Result<BTreeMap<TimeLossGroup, T>> {
    group_time_loss_by(records, Aggregate::Mean)
}

pub fn group_time_loss_by<T: Scalar>(
    records: &[VehicleRecord<T>],
    how: Aggregate,
) -> Result<BTreeMap<TimeLossGroup, T>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("group_time_loss needs at least one record"));
    }
    let mut groups: BTreeMap<TimeLossGroup, Vec<T>> = BTreeMap::new();
    for r in records {
        groups.entry(group_of(r)).or_default().push(time_loss(r)?);
    }
    Ok(groups
        .into_iter()
        .map(|(k, mut v)| {
            let value = match how {
                Aggregate::Mean => mean(&v),
                Aggregate::Median => median(&mut v),
            };
            (k, value)
        })
        .collect())
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    let n = T::from_usize(values.len()).expect("len fits");
    values.iter().fold(T::zero(), |a, &b| a + b) / n
}

/// Empirical (n − 1) standard deviation; zero for fewer than two values.
pub fn std_dev<T: Scalar>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let m = mean(values);
    let ss = values.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    (ss / T::from_usize(values.len() - 1).expect("len fits")).sqrt()
}

fn median<T: Scalar>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite time loss"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::lit(2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, class: VehicleClass, pax: u32, wanted: f64, actual: f64, exit: f64) -> VehicleRecord<f64> {
        VehicleRecord {
            id,
            class,
            passengers: pax,
            depart_wanted: wanted,
            depart_actual: Some(actual),
            exit_time: Some(exit),
            free_flow_time: 40.0,
        }
    }

    #[test]
    fn delay_components() {
        let free = rec(1, VehicleClass::Hdv, 1, 0.0, 0.0, 40.0);
        assert_eq!(time_loss(&free).unwrap(), 0.0);
        assert_eq!(depart_delay(&free).unwrap(), 0.0);
        assert_eq!(vehicle_delay(&free).unwrap(), 0.0);
        let slow = rec(2, VehicleClass::Hdv, 1, 100.0, 130.0, 230.0);
        assert_eq!(time_loss(&slow).unwrap(), 60.0);
        assert_eq!(depart_delay(&slow).unwrap(), 30.0);
        assert_eq!(vehicle_delay(&slow).unwrap(), 90.0);
    }

    #[test]
    fn incomplete_records_error() {
        let mut r = rec(3, VehicleClass::Cav, 1, 0.0, 0.0, 40.0);
        r.exit_time = None;
        assert!(matches!(time_loss(&r), Err(Error::IncompleteRecord { missing: "exit_time", .. })));
        r.depart_actual = None;
        assert!(matches!(depart_delay(&r), Err(Error::IncompleteRecord { .. })));
        assert!(vehicle_delay(&r).is_err());
    }

    #[test]
    fn apd_examples() {
        let one = rec(1, VehicleClass::Cav, 2, 0.0, 0.0, 140.0);
        assert_eq!(apd(&[one.clone()]).unwrap(), 100.0);
        let other = rec(2, VehicleClass::Hdv, 1, 0.0, 0.0, 90.0);
        let v = apd(&[one, other]).unwrap();
        assert!((v - 250.0 / 3.0).abs() < 1e-12);
        assert!(matches!(apd::<f64>(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn grouping_layout() {
        let hdv_only: Vec<_> = (0..4).map(|i| rec(i, VehicleClass::Hdv, 1 + i as u32, 0.0, 0.0, 50.0)).collect();
        let g = group_time_loss(&hdv_only).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[&TimeLossGroup::Hdv], 10.0);

        let mut mixed = hdv_only.clone();
        for p in 1..=5u32 {
            mixed.push(rec(10 + p as u64, VehicleClass::Cav, p, 0.0, 0.0, 40.0 + f64::from(p)));
            mixed.push(rec(20 + p as u64, VehicleClass::Cav, p, 0.0, 0.0, 42.0 + f64::from(p)));
        }
        let g = group_time_loss(&mixed).unwrap();
        assert_eq!(g.len(), 6);
        for p in 1..=5u32 {
            assert_eq!(g[&TimeLossGroup::Cav { passengers: p }], f64::from(p) + 1.0);
        }
        let med = group_time_loss_by(&mixed, Aggregate::Median).unwrap();
        assert_eq!(med[&TimeLossGroup::Cav { passengers: 3 }], 4.0);
    }

    #[test]
    fn std_dev_small_inputs() {
        assert_eq!(std_dev::<f64>(&[3.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn records() -> impl Strategy<Value = Vec<VehicleRecord<f64>>> {
            prop::collection::vec((0.0f64..500.0, 0.0f64..300.0, 0.0f64..400.0, 1u32..8), 1..60).prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (w, dd, tl, p))| rec(i as u64, VehicleClass::Cav, p, w, w + dd, w + dd + 40.0 + tl))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn apd_is_bounded_by_vd_extremes(rs in records()) {
                let a = apd(&rs).unwrap();
                let vds: Vec<f64> = rs.iter().map(|r| vehicle_delay(r).unwrap()).collect();
                let lo = vds.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
            }

            #[test]
            fn apd_ignores_order(rs in records()) {
                let mut rev = rs.clone();
                rev.reverse();
                let a = apd(&rs).unwrap();
                prop_assert!((a - apd(&rev).unwrap()).abs() <= 1e-9 * a.abs().max(1.0));
            }

            #[test]
            fn apd_scales_with_delay(rs in records(), c in 0.1f64..10.0) {
                // scale every delay component by c: shift all timestamps so that VD scales
                let scaled: Vec<_> = rs.iter().map(|r| {
                    let dd = depart_delay(r).unwrap() * c;
                    let tl = time_loss(r).unwrap() * c;
                    let mut s = r.clone();
                    s.depart_actual = Some(r.depart_wanted + dd);
                    s.exit_time = Some(r.depart_wanted + dd + r.free_flow_time + tl);
                    s
                }).collect();
                let a = apd(&rs).unwrap();
                prop_assert!((apd(&scaled).unwrap() - c * a).abs() <= 1e-7 * (c * a).abs().max(1.0));
            }
        }
    }
}
