//! Plain-text case format.
//!
//! ```text
//! BASE_MVA
//! 100
//! BUS
//! # id kind Pd Qd Gs Bs Vset ThetaSet(deg)
//! 1 3 0 0 0 0 1.04 0
//! BRANCH
//! # from to r x b_charging tap status
//! 1 4 0 0.0576 0 1 1
//! GEN
//! # bus Pg Qg Vset
//! 1 0.723 0.2703 1.04
//! ```
//!
//! Powers and shunts are per-unit on `BASE_MVA`; kind codes are
//! 1 = PQ, 2 = PV, 3 = Slack. Fields may be separated by whitespace or
//! commas; `#` and `%` start comments. Repeated branch rows are kept as
//! separate records.

use std::fmt::Write;

use super::{Branch, Bus, BusKind, Generator, Network};
use crate::error::NetworkError;
use crate::scalar::Real;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    BaseMva,
    Bus,
    Branch,
    Gen,
}

fn section_of(token: &str) -> Option<Section> {
    match token.to_ascii_uppercase().as_str() {
        "BASE_MVA" => Some(Section::BaseMva),
        "BUS" => Some(Section::Bus),
        "BRANCH" => Some(Section::Branch),
        "GEN" => Some(Section::Gen),
        _ => None,
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> NetworkError {
    NetworkError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|s| !s.is_empty())
        .collect()
}

fn num<T: Real>(tok: &str, line: usize) -> Result<T, NetworkError> {
    tok.parse::<T>()
        .ok()
        .filter(|v| v.is_finite_value())
        .ok_or_else(|| syntax(line, format!("invalid number '{tok}'")))
}

fn int(tok: &str, line: usize) -> Result<usize, NetworkError> {
    // Accept "49" as well as "49.0" since converted tables often carry floats.
    if let Ok(v) = tok.parse::<usize>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(syntax(line, format!("invalid integer '{tok}'"))),
    }
}

fn expect_len(toks: &[&str], n: usize, what: &str, line: usize) -> Result<(), NetworkError> {
    if toks.len() != n {
        return Err(syntax(
            line,
            format!("{what} row needs {n} columns, found {}", toks.len()),
        ));
    }
    Ok(())
}

/// Parses case-file text into a validated network.
pub fn parse_case<T: Real>(text: &str) -> Result<Network<T>, NetworkError> {
    let mut section = Section::None;
    let mut base_mva: Option<T> = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut gens = Vec::new();
    let deg = T::pi() / T::of(180.0);

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split(['#', '%']).next().unwrap_or("");
        let toks = fields(content);
        if toks.is_empty() {
            continue;
        }
        if let Some(s) = section_of(toks[0]) {
            section = s;
            if toks.len() == 1 {
                continue;
            }
            if s != Section::BaseMva || toks.len() != 2 {
                return Err(syntax(line, "unexpected tokens after section header"));
            }
        }
        if toks[0].eq_ignore_ascii_case("END") {
            break;
        }
        let row: &[&str] = if section == Section::BaseMva && section_of(toks[0]).is_some() {
            &toks[1..]
        } else {
            &toks
        };
        match section {
            Section::None => return Err(syntax(line, "data before any section header")),
            Section::BaseMva => {
                expect_len(row, 1, "BASE_MVA", line)?;
                if base_mva.is_some() {
                    return Err(syntax(line, "BASE_MVA given twice"));
                }
                base_mva = Some(num(row[0], line)?);
            }
            Section::Bus => {
                expect_len(row, 8, "BUS", line)?;
                let code = int(row[1], line)?;
                let kind = u8::try_from(code)
                    .ok()
                    .and_then(BusKind::from_code)
                    .ok_or_else(|| syntax(line, format!("unknown bus kind code {code}")))?;
                buses.push(Bus {
                    id: int(row[0], line)?,
                    kind,
                    p_demand: num(row[2], line)?,
                    q_demand: num(row[3], line)?,
                    g_shunt: num(row[4], line)?,
                    b_shunt: num(row[5], line)?,
                    v_setpoint: num(row[6], line)?,
                    theta_setpoint: num::<T>(row[7], line)? * deg,
                });
            }
            Section::Branch => {
                expect_len(row, 7, "BRANCH", line)?;
                let status = int(row[6], line)?;
                if status > 1 {
                    return Err(syntax(line, format!("status must be 0 or 1, got {status}")));
                }
                branches.push(Branch {
                    from_bus: int(row[0], line)?,
                    to_bus: int(row[1], line)?,
                    r: num(row[2], line)?,
                    x: num(row[3], line)?,
                    b_charging: num(row[4], line)?,
                    tap: num(row[5], line)?,
                    in_service: status == 1,
                });
            }
            Section::Gen => {
                expect_len(row, 4, "GEN", line)?;
                gens.push(Generator {
                    bus: int(row[0], line)?,
                    p_gen: num(row[1], line)?,
                    q_gen: num(row[2], line)?,
                    v_setpoint: num(row[3], line)?,
                });
            }
        }
    }
    let base_mva =
        base_mva.ok_or_else(|| NetworkError::Semantic("missing BASE_MVA section".into()))?;
    Network::new(buses, branches, gens, base_mva)
}

/// Degrees text for `theta` that parses back to exactly `theta` radians.
fn degrees_exact<T: Real>(theta: T) -> T {
    let deg = T::pi() / T::of(180.0);
    let candidate = theta / deg;
    if candidate * deg == theta {
        return candidate;
    }
    let (mut up, mut down) = (candidate, candidate);
    for _ in 0..64 {
        up = up.step_up();
        down = down.step_down();
        if up * deg == theta {
            return up;
        }
        if down * deg == theta {
            return down;
        }
    }
    // No exact preimage within 64 ulps; keep the nearest.
    candidate
}

impl<T: Real> Network<T> {
    /// Serializes in the case format; `parse_case` inverts this exactly.
    pub fn to_case_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "BASE_MVA\n{}", self.base_mva());
        let _ = writeln!(s, "BUS\n# id kind Pd Qd Gs Bs Vset ThetaSet(deg)");
        for i in 0..self.len() {
            let _ = writeln!(s, "{}", self.bus_row(i));
        }
        let _ = writeln!(s, "BRANCH\n# from to r x b_charging tap status");
        for k in 0..self.branches().len() {
            let _ = writeln!(s, "{}", self.branch_row(k));
        }
        let _ = writeln!(s, "GEN\n# bus Pg Qg Vset");
        for g in self.generators() {
            let _ = writeln!(s, "{} {} {} {}", g.bus, g.p_gen, g.q_gen, g.v_setpoint);
        }
        s
    }

    /// One bus record formatted as a case-file row.
    pub fn bus_row(&self, i: usize) -> String {
        let b = &self.buses()[i];
        format!(
            "{} {} {} {} {} {} {} {}",
            b.id,
            b.kind.code(),
            b.p_demand,
            b.q_demand,
            b.g_shunt,
            b.b_shunt,
            b.v_setpoint,
            degrees_exact(b.theta_setpoint)
        )
    }

    /// One branch record formatted as a case-file row.
    pub fn branch_row(&self, k: usize) -> String {
        let br = &self.branches()[k];
        format!(
            "{} {} {} {} {} {} {}",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b_charging,
            br.tap,
            u8::from(br.in_service)
        )
    }
}
