use std::collections::BTreeMap;

use super::ScenarioConfig;
use crate::kernel::{EntityKind, TraceKind, TraceRecord};

/// ASCII Gantt chart of a run, one column per tick.
///
/// Core rows show the first letter of the user whose job ran in each slice
/// (`-` for a reserved but idle slot). Pacer rows mark clock ticks with `|`
/// and releases with `^`. Client rows mark deliveries with `*`; gateway rows
/// mark monitor denials with `x`.
pub fn render_chart(cfg: &ScenarioConfig, trace: &[TraceRecord]) -> String {
    // Reserved-but-idle slots repeat until the horizon; stop after the last real event.
    let last = trace
        .iter()
        .filter(|r| !(r.kind == TraceKind::SliceStart && r.detail("idle").is_some()))
        .map(|r| r.time.0 + 1)
        .max()
        .unwrap_or(0)
        .min(cfg.horizon);
    let width = last as usize + 1;
    let mut rows: BTreeMap<(EntityKind, String), Vec<char>> = BTreeMap::new();
    let blank = || vec!['.'; width];

    let cloud = cfg.build_cloud().ok();
    if let Some(cloud) = &cloud {
        for id in cloud.core_ids() {
            rows.insert((id.kind, id.to_string()), blank());
        }
    }
    if let Some(p) = &cfg.pacer {
        let (period, phase) = (p.period().unwrap_or(1), p.phase_or_default().unwrap_or(1));
        for u in &cfg.users {
            let mut row = blank();
            let mut t = phase;
            while (t as usize) < width {
                row[t as usize] = '|';
                t += period;
            }
            rows.insert((EntityKind::Pacer, format!("pacer:{u}")), row);
        }
    }
    for u in &cfg.users {
        rows.insert((EntityKind::Client, format!("client:{u}")), blank());
    }

    for r in trace.iter().filter(|r| (r.time.0 as usize) < width) {
        let t = r.time.0 as usize;
        let mark = match r.kind {
            TraceKind::SliceStart if r.detail("idle").is_some() => '-',
            TraceKind::SliceStart => r.detail("user").and_then(|u| u.chars().next()).unwrap_or('?'),
            TraceKind::PacerRelease => '^',
            TraceKind::MsgRecv if r.entity.kind == EntityKind::Client => '*',
            TraceKind::MonitorDeny if r.entity.kind == EntityKind::Gateway => 'x',
            _ => continue,
        };
        let row = rows.entry((r.entity.kind, r.entity.to_string())).or_insert_with(blank);
        row[t] = mark;
    }

    let name_width = rows.keys().map(|(_, n)| n.len()).max().unwrap_or(0).max(4) + 2;
    let mut out = format!("scenario {} ({:?}), ticks 0..={last}\n", cfg.name, cfg.classify());
    let tens: String =
        (0..width).map(|t| if t % 10 == 0 { char::from(b'0' + ((t / 10) % 10) as u8) } else { ' ' }).collect();
    let ones: String = (0..width).map(|t| char::from(b'0' + (t % 10) as u8)).collect();
    out.push_str(&format!("{:name_width$}{}\n", "", tens.trim_end()));
    out.push_str(&format!("{:name_width$}{ones}\n", "tick"));
    for ((_, name), row) in rows {
        out.push_str(&format!("{name:name_width$}{}\n", row.into_iter().collect::<String>()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ScenarioParams, TopologyKind};

    #[test]
    fn dedicated_chart_has_disjoint_core_rows() {
        let cfg = build_scenario(TopologyKind::Dedicated, &ScenarioParams::default()).unwrap();
        let chart = render_chart(&cfg, &cfg.run().unwrap());
        let row = |name: &str| chart.lines().find(|l| l.starts_with(name)).unwrap()[name.len()..].trim().to_string();
        let (a, b) = (row("core:A"), row("core:B"));
        assert!(a.contains('A') && !a.contains('B'));
        assert!(b.contains('B') && !b.contains('A'));
        assert!(row("client:A").contains('*'));
    }
}
