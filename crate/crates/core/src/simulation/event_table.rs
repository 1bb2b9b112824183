use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{IntegratedNetwork, Status, Statuses};
use crate::recovery::RepairDurations;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Fail,
    RepairStart,
    RepairEnd,
}

impl Action {
    fn rank(self) -> u8 {
        match self {
            Action::Fail => 0,
            Action::RepairEnd => 1,
            Action::RepairStart => 2,
        }
    }

    pub fn status(self) -> Status {
        match self {
            Action::Fail => Status::Failed,
            Action::RepairStart => Status::UnderRepair,
            Action::RepairEnd => Status::Repaired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    #[serde(rename = "time_s")]
    pub time: f64,
    pub component_id: String,
    pub action: Action,
    pub crew_id: Option<String>,
}

/// Time-ordered failures and repair actions.
///
/// Rows sort by time, then failures before repair ends before repair
/// starts, then component id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    rows: Vec<EventRow>,
}

impl EventTable {
    pub fn new(mut rows: Vec<EventRow>) -> Self {
        rows.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.action.rank().cmp(&b.action.rank()))
                .then_with(|| a.component_id.cmp(&b.component_id))
        });
        EventTable { rows }
    }

    pub fn rows(&self) -> &[EventRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct event times, ascending.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.rows.iter().map(|r| r.time).collect();
        t.dedup();
        t
    }

    pub fn first_time(&self) -> Option<f64> {
        self.rows.first().map(|r| r.time)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.rows.last().map(|r| r.time)
    }

    /// Component statuses after applying every row with `time <= t`.
    pub fn statuses_at(&self, t: f64) -> Statuses {
        let mut s = Statuses::new();
        for r in self.rows.iter().take_while(|r| r.time <= t) {
            s.set(r.component_id.clone(), r.action.status());
        }
        s
    }

    pub fn time_of(&self, id: &str, action: Action) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.component_id == id && r.action == action)
            .map(|r| r.time)
    }

    /// Checks ordering, the per-component action sequence, repair durations
    /// and that no crew works on two components at once.
    pub fn validate(&self, net: &IntegratedNetwork, durations: &RepairDurations) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("event table: {m}")));
        if self.rows.windows(2).any(|w| w[1].time < w[0].time) {
            return bad("rows are not sorted by time".into());
        }
        let mut per_component: BTreeMap<&str, Vec<&EventRow>> = BTreeMap::new();
        for r in &self.rows {
            if !(r.time.is_finite() && r.time >= 0.0) {
                return bad(format!("{} has time {}", r.component_id, r.time));
            }
            net.require(&r.component_id)?;
            per_component.entry(&r.component_id).or_default().push(r);
        }
        let mut crew_jobs: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for (id, rows) in &per_component {
            let actions: Vec<Action> = rows.iter().map(|r| r.action).collect();
            let ok = matches!(
                actions.as_slice(),
                [Action::Fail] | [Action::Fail, Action::RepairStart, Action::RepairEnd]
            );
            if !ok {
                return bad(format!("{id} has actions {actions:?}"));
            }
            if let [_, start, end] = rows.as_slice() {
                let kind = &net.require(id)?.kind;
                let duration = durations
                    .of(kind)
                    .ok_or_else(|| Error::InvalidInput(format!("event table: {id} is not repairable")))?;
                if ((end.time - start.time) - duration).abs() > 1e-6 * duration.max(1.0) {
                    return bad(format!("{id} repair lasts {} s, expected {duration} s", end.time - start.time));
                }
                match (&start.crew_id, &end.crew_id) {
                    (Some(a), Some(b)) if a == b => crew_jobs.entry(a).or_default().push((start.time, end.time)),
                    _ => return bad(format!("{id} repair has no consistent crew")),
                }
            }
        }
        for (crew, jobs) in crew_jobs.iter_mut() {
            jobs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if jobs.windows(2).any(|w| w[1].0 < w[0].1) {
                return bad(format!("crew {crew} has overlapping repairs"));
            }
        }
        Ok(())
    }

    /// CSV with columns `time_s, component_id, action, crew_id`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<EventRow>, _>>()?;
        Ok(EventTable::new(rows))
    }
}
