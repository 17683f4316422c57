use std::fmt::Write as _;

use super::{BranchKind, BusKind, Feeder, LoadPoint, SwitchRole};
use crate::complex::format_complex;

impl Feeder {
    /// Serializes to the feeder text format. Profiles are inlined and
    /// impedances written explicitly, so the output is self-contained.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.profiles {
            let values: Vec<String> = p.multipliers.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "[profile {}]\nmultipliers = {}\n", p.id, values.join(" "));
        }
        for b in &self.buses {
            let kind = match b.kind {
                BusKind::Substation => "substation",
                BusKind::Load => "load",
                BusKind::Junction => "junction",
            };
            let _ = writeln!(
                out,
                "[bus {}]\nphases = {}\nkind = {kind}\nkv = {}\n",
                b.id, b.phases, b.nominal_kv
            );
        }
        for br in &self.branches {
            let _ = writeln!(out, "[branch {}]", br.id);
            let _ = writeln!(out, "from = {}", self.buses[br.from].id);
            let _ = writeln!(out, "to = {}", self.buses[br.to].id);
            let _ = writeln!(out, "kind = {}", br.kind.name());
            if br.kind == BranchKind::Switch {
                let role = match br.switch_role {
                    Some(SwitchRole::Tie) => "tie",
                    _ => "sectionalizing",
                };
                let _ = writeln!(out, "role = {role}\nnormally_open = {}", br.normally_open);
            }
            let z = br.z_per_length;
            let entries = [z[0][0], z[0][1], z[0][2], z[1][1], z[1][2], z[2][2]]
                .map(format_complex)
                .join(" ");
            let _ = writeln!(out, "phases = {}\nz = {entries}\nlength = {}", br.phases, br.length);
            let _ = writeln!(
                out,
                "failure_rate = {}\nmttr = {}\n",
                br.failure_rate, br.mttr_hours
            );
        }
        for l in &self.loads {
            let _ = writeln!(out, "[load {}]", l.id);
            let _ = writeln!(out, "bus = {}\nmodel = {}", self.buses[l.bus].id, l.model.name());
            let _ = writeln!(out, "phases = {}", l.phases);
            let _ = writeln!(out, "kw = {}", per_phase(l, &l.kw, false));
            let _ = writeln!(out, "kvar = {}", per_phase(l, &l.kvar, false));
            if let Some(p) = l.profile {
                let _ = writeln!(out, "profile = {}", self.profiles[p].id);
            }
            out.push('\n');
        }
        for c in &self.capacitors {
            let _ = writeln!(
                out,
                "[capacitor {}]\nbus = {}\nphases = {}\nkvar = {}\n",
                c.id,
                self.buses[c.bus].id,
                c.phases,
                per_phase(c, &c.kvar, true)
            );
        }
        out
    }
}

fn per_phase(l: &LoadPoint, values: &[f64; 3], negate: bool) -> String {
    l.phases
        .iter()
        .map(|p| {
            let v = values[p.index()];
            (if negate { -v } else { v }).to_string()
        })
        .collect::<Vec<_>>()
        .join(" ")
}
