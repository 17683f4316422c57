use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::{
    check_profile_values, Branch, BranchKind, Bus, BusKind, Feeder, FeederError, Impedance,
    LoadModel, LoadPoint, LoadProfile, PhaseSet, SwitchRole,
};
use crate::complex::parse_complex;

/// Parses a feeder document; relative profile paths resolve against the
/// current directory.
pub fn parse_feeder(text: &str) -> Result<Feeder, FeederError> {
    parse_feeder_in(text, None)
}

/// Reads and parses a feeder file; profile CSVs resolve next to it.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder, FeederError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FeederError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_feeder_in(&text, path.parent())
}

/// Single-column CSV of hourly multipliers; an optional non-numeric header
/// row and `#` comments are skipped.
pub fn parse_profile_csv(text: &str) -> Result<Vec<f64>, FeederError> {
    let mut values = Vec::with_capacity(crate::HOURS_PER_YEAR);
    let mut first = true;
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if first => {}
            Err(_) => {
                return Err(FeederError::Syntax {
                    line: n + 1,
                    message: format!("'{field}' is not a number"),
                })
            }
        }
        first = false;
    }
    check_profile_values(&values, 0)?;
    Ok(values)
}

pub fn parse_feeder_in(text: &str, base_dir: Option<&Path>) -> Result<Feeder, FeederError> {
    let sections = split_sections(text)?;
    let mut by_kind: HashMap<&'static str, Vec<Section>> = HashMap::new();
    for s in sections {
        by_kind.entry(s.kind).or_default().push(s);
    }
    let mut take = |k: &'static str| by_kind.remove(k).unwrap_or_default();
    let linecode_sections = take("linecode");
    let profile_sections = take("profile");
    let bus_sections = take("bus");
    let branch_sections = take("branch");
    let load_sections = take("load");
    let capacitor_sections = take("capacitor");

    let mut linecodes: HashMap<String, (Option<PhaseSet>, Impedance)> = HashMap::new();
    for mut s in linecode_sections {
        check_unique(&linecodes, &s, "linecode")?;
        let phases = s.take("phases").map(|(v, l)| phases(&v, l)).transpose()?;
        let (z, zl) = s.require("z")?;
        let z = impedance(&z, zl)?;
        s.finish()?;
        linecodes.insert(s.name.clone(), (phases, z));
    }

    let mut profiles = Vec::new();
    let mut profile_index = HashMap::new();
    for mut s in profile_sections {
        check_unique(&profile_index, &s, "profile")?;
        let file = s.take("file");
        let inline = s.take("multipliers");
        let multipliers = match (file, inline) {
            (Some((path, line)), None) => {
                let full = resolve(base_dir, &path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|source| FeederError::Io { path: full.clone(), source })?;
                parse_profile_csv(&text).map_err(|e| FeederError::Invalid {
                    line,
                    message: format!("{}: {e}", full.display()),
                })?
            }
            (None, Some((values, line))) => {
                let m = numbers(&values, line)?;
                check_profile_values(&m, line)?;
                m
            }
            _ => {
                return Err(FeederError::Invalid {
                    line: s.line,
                    message: format!("profile '{}' needs exactly one of 'file' or 'multipliers'", s.name),
                })
            }
        };
        s.finish()?;
        profile_index.insert(s.name.clone(), profiles.len());
        profiles.push(LoadProfile {
            id: s.name.clone(),
            multipliers,
        });
    }

    let mut buses = Vec::new();
    let mut bus_index = HashMap::new();
    for mut s in bus_sections {
        check_unique(&bus_index, &s, "bus")?;
        let (p, pl) = s.require("phases")?;
        let phases = phases(&p, pl)?;
        let kind = match s.take("kind") {
            None => BusKind::Junction,
            Some((k, l)) => match k.as_str() {
                "substation" => BusKind::Substation,
                "load" => BusKind::Load,
                "junction" => BusKind::Junction,
                _ => return Err(syntax(l, format!("unknown bus kind '{k}'"))),
            },
        };
        let (kv, kvl) = s.require("kv")?;
        let nominal_kv = number(&kv, kvl)?;
        if !(nominal_kv > 0.0 && nominal_kv.is_finite()) {
            return Err(invalid(kvl, format!("bus '{}' nominal voltage must be positive", s.name)));
        }
        s.finish()?;
        bus_index.insert(s.name.clone(), buses.len());
        buses.push(Bus {
            id: s.name.clone(),
            phases,
            kind,
            nominal_kv,
        });
    }

    let mut branches = Vec::new();
    let mut branch_index = HashMap::new();
    for mut s in branch_sections {
        check_unique(&branch_index, &s, "branch")?;
        let from = s.bus_ref("from", "branch", &bus_index)?;
        let to = s.bus_ref("to", "branch", &bus_index)?;
        if from == to {
            return Err(invalid(s.line, format!("branch '{}' connects bus to itself", s.name)));
        }
        let (k, kl) = s.require("kind")?;
        let kind = match k.as_str() {
            "line" => BranchKind::Line,
            "transformer" => BranchKind::Transformer,
            "switch" => BranchKind::Switch,
            _ => return Err(syntax(kl, format!("unknown branch kind '{k}'"))),
        };
        let switch_role = match (kind, s.take("role")) {
            (BranchKind::Switch, None) => Some(SwitchRole::Sectionalizing),
            (BranchKind::Switch, Some((r, l))) => Some(match r.as_str() {
                "sectionalizing" => SwitchRole::Sectionalizing,
                "tie" => SwitchRole::Tie,
                _ => return Err(syntax(l, format!("unknown switch role '{r}'"))),
            }),
            (_, Some((_, l))) => return Err(invalid(l, "only switches take a role".into())),
            (_, None) => None,
        };
        let normally_open = match s.take("normally_open") {
            None => false,
            Some((v, l)) => match v.as_str() {
                "true" => true,
                "false" => false,
                _ => return Err(syntax(l, format!("expected true or false, got '{v}'"))),
            },
        };
        if normally_open && switch_role != Some(SwitchRole::Tie) {
            return Err(invalid(s.line, format!("branch '{}' is normally open but not a tie switch", s.name)));
        }
        let code = match s.take("linecode") {
            Some((c, l)) => Some(linecodes.get(&c).ok_or_else(|| FeederError::Dangling {
                line: l,
                entity: "branch",
                owner: s.name.clone(),
                target: "linecode",
                name: c.clone(),
            })?),
            None => None,
        };
        let explicit_z = s.take("z").map(|(z, l)| impedance(&z, l)).transpose()?;
        let z_per_length = match (explicit_z, code) {
            (Some(_), Some(_)) => {
                return Err(invalid(s.line, format!("branch '{}' has both 'z' and 'linecode'", s.name)))
            }
            (Some(z), None) => z,
            (None, Some((_, z))) => *z,
            (None, None) if kind == BranchKind::Switch => [[Complex64::new(0.0, 0.0); 3]; 3],
            (None, None) => {
                return Err(invalid(s.line, format!("branch '{}' needs 'z' or 'linecode'", s.name)))
            }
        };
        let bus_phases = buses[from].phases.intersect(buses[to].phases);
        let branch_phases = match s.take("phases") {
            Some((p, l)) => {
                let p = phases(&p, l)?;
                if !p.is_subset(bus_phases) {
                    return Err(invalid(l, format!("branch '{}' phases {p} not present at both ends", s.name)));
                }
                p
            }
            None => code.and_then(|c| c.0).unwrap_or(bus_phases),
        };
        for p in crate::feeder::Phase::ALL {
            let present = branch_phases.contains(p);
            let row_nonzero = (0..3).any(|q| z_per_length[p.index()][q] != Complex64::new(0.0, 0.0));
            if !present && row_nonzero {
                return Err(invalid(s.line, format!("branch '{}' has impedance on absent phase {}", s.name, p.letter())));
            }
        }
        let length = match s.take("length") {
            Some((v, l)) => {
                let x = number(&v, l)?;
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(invalid(l, "length must be nonnegative".into()));
                }
                x
            }
            None => 1.0,
        };
        let (default_rate, default_mttr) = kind.default_reliability();
        let failure_rate = s.take("failure_rate").map(|(v, l)| number(&v, l)).transpose()?.unwrap_or(default_rate);
        let mttr_hours = s.take("mttr").map(|(v, l)| number(&v, l)).transpose()?.unwrap_or(default_mttr);
        if !(failure_rate >= 0.0 && failure_rate.is_finite()) || !(mttr_hours > 0.0 && mttr_hours.is_finite()) {
            return Err(invalid(s.line, format!("branch '{}' needs failure_rate >= 0 and mttr > 0", s.name)));
        }
        s.finish()?;
        branch_index.insert(s.name.clone(), branches.len());
        branches.push(Branch {
            id: s.name.clone(),
            from,
            to,
            kind,
            switch_role,
            normally_open,
            phases: branch_phases,
            z_per_length,
            length,
            failure_rate,
            mttr_hours,
        });
    }

    let mut loads = Vec::new();
    let mut seen = HashSet::new();
    for mut s in load_sections {
        if !seen.insert(s.name.clone()) {
            return Err(duplicate(&s, "load"));
        }
        let bus = s.bus_ref("bus", "load", &bus_index)?;
        let model = match s.take("model") {
            None => LoadModel::ConstantPower,
            Some((m, l)) => match m.as_str() {
                "constant_power" => LoadModel::ConstantPower,
                "constant_current" => LoadModel::ConstantCurrent,
                "constant_impedance" => LoadModel::ConstantImpedance,
                _ => return Err(syntax(l, format!("unknown load model '{m}'"))),
            },
        };
        let (ph, phl) = s.require("phases")?;
        let ph = phases(&ph, phl)?;
        if !ph.is_subset(buses[bus].phases) {
            return Err(invalid(phl, format!("load '{}' phases {ph} not present at bus '{}'", s.name, buses[bus].id)));
        }
        let (kw, kwl) = s.require("kw")?;
        let kw = per_phase(ph, &kw, kwl)?;
        let kvar = match s.take("kvar") {
            Some((v, l)) => per_phase(ph, &v, l)?,
            None => [0.0; 3],
        };
        let profile = match s.take("profile") {
            Some((p, l)) => Some(*profile_index.get(&p).ok_or_else(|| FeederError::Dangling {
                line: l,
                entity: "load",
                owner: s.name.clone(),
                target: "profile",
                name: p.clone(),
            })?),
            None => None,
        };
        s.finish()?;
        loads.push(LoadPoint {
            id: s.name.clone(),
            bus,
            model,
            phases: ph,
            kw,
            kvar,
            profile,
        });
    }

    let mut capacitors = Vec::new();
    let mut seen = HashSet::new();
    for mut s in capacitor_sections {
        if !seen.insert(s.name.clone()) {
            return Err(duplicate(&s, "capacitor"));
        }
        let bus = s.bus_ref("bus", "capacitor", &bus_index)?;
        let (ph, phl) = s.require("phases")?;
        let ph = phases(&ph, phl)?;
        if !ph.is_subset(buses[bus].phases) {
            return Err(invalid(phl, format!("capacitor '{}' phases {ph} not present at bus", s.name)));
        }
        let (q, ql) = s.require("kvar")?;
        let mut kvar = per_phase(ph, &q, ql)?;
        for v in kvar.iter_mut() {
            *v = -*v;
        }
        s.finish()?;
        capacitors.push(LoadPoint {
            id: s.name.clone(),
            bus,
            model: LoadModel::ConstantImpedance,
            phases: ph,
            kw: [0.0; 3],
            kvar,
            profile: None,
        });
    }

    Feeder::assemble(buses, branches, loads, capacitors, profiles)
}

struct Section {
    kind: &'static str,
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let pos = self.entries.iter().position(|(k, _, _)| k == key)?;
        let (_, v, l) = self.entries.remove(pos);
        Some((v, l))
    }

    fn require(&mut self, key: &str) -> Result<(String, usize), FeederError> {
        let line = self.line;
        let (kind, name) = (self.kind, self.name.clone());
        self.take(key)
            .ok_or_else(|| invalid(line, format!("{kind} '{name}' is missing '{key}'")))
    }

    fn bus_ref(
        &mut self,
        key: &str,
        entity: &'static str,
        buses: &HashMap<String, usize>,
    ) -> Result<usize, FeederError> {
        let (id, line) = self.require(key)?;
        buses.get(&id).copied().ok_or_else(|| FeederError::Dangling {
            line,
            entity,
            owner: self.name.clone(),
            target: "bus",
            name: id,
        })
    }

    fn finish(&self) -> Result<(), FeederError> {
        match self.entries.first() {
            Some((k, _, l)) => Err(syntax(*l, format!("unknown key '{k}' in {} section", self.kind))),
            None => Ok(()),
        }
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>, FeederError> {
    let mut sections: Vec<Section> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, "unterminated section header".into()))?;
            let mut parts = header.split_whitespace();
            let kind = match parts.next() {
                Some("bus") => "bus",
                Some("branch") => "branch",
                Some("load") => "load",
                Some("capacitor") => "capacitor",
                Some("profile") => "profile",
                Some("linecode") => "linecode",
                Some(other) => return Err(syntax(line_no, format!("unknown section '{other}'"))),
                None => return Err(syntax(line_no, "empty section header".into())),
            };
            let name = parts
                .next()
                .ok_or_else(|| syntax(line_no, format!("{kind} section needs a name")))?;
            if parts.next().is_some() {
                return Err(syntax(line_no, "section name must be a single token".into()));
            }
            sections.push(Section {
                kind,
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax(line_no, format!("expected 'key = value', got '{line}'")))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| syntax(line_no, "key outside of any section".into()))?;
        let key = key.trim();
        if section.entries.iter().any(|(k, _, _)| k == key) {
            return Err(syntax(line_no, format!("duplicate key '{key}'")));
        }
        section
            .entries
            .push((key.to_string(), value.trim().to_string(), line_no));
    }
    Ok(sections)
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a)
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let path = Path::new(p);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn check_unique<V>(seen: &HashMap<String, V>, s: &Section, entity: &'static str) -> Result<(), FeederError> {
    if seen.contains_key(&s.name) {
        Err(duplicate(s, entity))
    } else {
        Ok(())
    }
}

fn duplicate(s: &Section, entity: &'static str) -> FeederError {
    FeederError::DuplicateId {
        line: s.line,
        entity,
        id: s.name.clone(),
    }
}

fn syntax(line: usize, message: String) -> FeederError {
    FeederError::Syntax { line, message }
}

fn invalid(line: usize, message: String) -> FeederError {
    FeederError::Invalid { line, message }
}

fn phases(s: &str, line: usize) -> Result<PhaseSet, FeederError> {
    PhaseSet::parse(s).ok_or_else(|| syntax(line, format!("bad phase list '{s}'")))
}

fn number(s: &str, line: usize) -> Result<f64, FeederError> {
    s.parse::<f64>()
        .map_err(|_| syntax(line, format!("'{s}' is not a number")))
}

fn numbers(s: &str, line: usize) -> Result<Vec<f64>, FeederError> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| number(t, line))
        .collect()
}

/// One value per listed phase, in A/B/C order.
fn per_phase(ph: PhaseSet, s: &str, line: usize) -> Result<[f64; 3], FeederError> {
    let vals = numbers(s, line)?;
    if vals.len() != ph.len() {
        return Err(invalid(line, format!("expected {} values for phases {ph}, got {}", ph.len(), vals.len())));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(invalid(line, "values must be finite".into()));
    }
    let mut out = [0.0; 3];
    for (p, v) in ph.iter().zip(vals) {
        out[p.index()] = v;
    }
    Ok(out)
}

/// Six upper-triangle entries (aa ab ac bb bc cc), mirrored into a
/// symmetric matrix.
fn impedance(s: &str, line: usize) -> Result<Impedance, FeederError> {
    let entries: Vec<Complex64> = s
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_complex(t).ok_or_else(|| syntax(line, format!("bad complex value '{t}'"))))
        .collect::<Result<_, _>>()?;
    if entries.len() != 6 {
        return Err(syntax(line, format!("impedance needs 6 entries, got {}", entries.len())));
    }
    if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid(line, "impedance must be finite".into()));
    }
    let [aa, ab, ac, bb, bc, cc] = [entries[0], entries[1], entries[2], entries[3], entries[4], entries[5]];
    Ok([[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]])
}
