//! Conversion of Matpower `.m` case files into the plain case format.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` are read.
//! Powers are divided by the base, a zero tap ratio becomes 1, out-of-service
//! generators are dropped, and PV/slack voltage setpoints come from the
//! generator table. Phase-shifting transformers are rejected.

use crate::error::NetworkError;

fn matrix(src: &str, name: &str) -> Result<Vec<(usize, Vec<f64>)>, NetworkError> {
    let key = format!("mpc.{name}");
    let start = src
        .match_indices(&key)
        .find(|(i, _)| {
            let rest = &src[i + key.len()..];
            rest.trim_start().starts_with('=')
        })
        .map(|(i, _)| i)
        .ok_or_else(|| NetworkError::Semantic(format!("missing {key} table")))?;
    let open = start
        + src[start..]
            .find('[')
            .ok_or_else(|| NetworkError::Semantic(format!("{key}: missing '['")))?;
    let close = open
        + src[open..]
            .find(']')
            .ok_or_else(|| NetworkError::Semantic(format!("{key}: missing ']'")))?;
    let first_line = src[..open].lines().count();
    let mut rows = Vec::new();
    for (k, raw) in src[open + 1..close].lines().enumerate() {
        let line = first_line + k;
        let content = raw.split('%').next().unwrap_or("");
        for chunk in content.split(';') {
            let toks: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if toks.is_empty() {
                continue;
            }
            let vals = toks
                .iter()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| NetworkError::Syntax {
                        line,
                        msg: format!("invalid number '{t}' in {key}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((line, vals));
        }
    }
    Ok(rows)
}

fn scalar(src: &str, name: &str) -> Result<f64, NetworkError> {
    let key = format!("mpc.{name}");
    for line in src.lines() {
        let content = line.split('%').next().unwrap_or("").trim();
        if let Some(rest) = content.strip_prefix(&key) {
            if let Some(v) = rest.trim_start().strip_prefix('=') {
                let v = v.trim().trim_end_matches(';').trim();
                return v
                    .parse()
                    .map_err(|_| NetworkError::Semantic(format!("invalid {key} value '{v}'")));
            }
        }
    }
    Err(NetworkError::Semantic(format!("missing {key}")))
}

fn need(row: &(usize, Vec<f64>), n: usize, what: &str) -> Result<(), NetworkError> {
    if row.1.len() < n {
        return Err(NetworkError::Syntax {
            line: row.0,
            msg: format!("{what} row needs at least {n} columns"),
        });
    }
    Ok(())
}

/// Converts Matpower case source text into case-format text.
pub fn convert_matpower(src: &str) -> Result<String, NetworkError> {
    let base = scalar(src, "baseMVA")?;
    if !(base > 0.0) {
        return Err(NetworkError::Semantic("baseMVA must be positive".into()));
    }
    let bus = matrix(src, "bus")?;
    let gen = matrix(src, "gen")?;
    let branch = matrix(src, "branch")?;

    let mut out = String::new();
    out.push_str(&format!(
        "# converted from Matpower case\nBASE_MVA\n{base}\n"
    ));

    let mut vset = std::collections::HashMap::new();
    for g in &gen {
        need(g, 8, "gen")?;
        if g.1[7] > 0.0 {
            vset.insert(g.1[0] as usize, g.1[5]);
        }
    }

    out.push_str("BUS\n# id kind Pd Qd Gs Bs Vset ThetaSet(deg)\n");
    for b in &bus {
        need(b, 9, "bus")?;
        let v = &b.1;
        let id = v[0] as usize;
        let kind = v[1] as u8;
        if kind == 4 {
            return Err(NetworkError::Semantic(format!("bus {id} is isolated")));
        }
        let vm = match kind {
            2 | 3 => vset.get(&id).copied().unwrap_or(v[7]),
            _ => v[7],
        };
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            id,
            kind,
            v[2] / base,
            v[3] / base,
            v[4] / base,
            v[5] / base,
            vm,
            v[8]
        ));
    }

    out.push_str("BRANCH\n# from to r x b_charging tap status\n");
    for br in &branch {
        need(br, 11, "branch")?;
        let v = &br.1;
        if v[9] != 0.0 {
            return Err(NetworkError::Syntax {
                line: br.0,
                msg: "phase-shifting transformers are not supported".into(),
            });
        }
        let tap = if v[8] == 0.0 { 1.0 } else { v[8] };
        let status = u8::from(v[10] > 0.0);
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            v[0] as usize, v[1] as usize, v[2], v[3], v[4], tap, status
        ));
    }

    out.push_str("GEN\n# bus Pg Qg Vset\n");
    for g in &gen {
        let v = &g.1;
        if v[7] > 0.0 {
            out.push_str(&format!(
                "{} {} {} {}\n",
                v[0] as usize,
                v[1] / base,
                v[2] / base,
                v[5]
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_case, BusKind, Network};

    const MINI: &str = "function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	19	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	72.3	27.03	300	-300	1.04	100	1	250	10;
];
mpc.branch = [
	1	2	0.01	0.1	0.2	250	250	250	0	0	1	-360	360;
	1	2	0.01	0.1	0.2	250	250	250	0.98	0	1	-360	360;
];
";

    #[test]
    fn converts_units_and_taps() {
        let text = convert_matpower(MINI).unwrap();
        let net: Network<f64> = parse_case(&text).unwrap();
        assert_eq!(net.bus(1).unwrap().kind, BusKind::Slack);
        assert_eq!(net.bus(1).unwrap().v_setpoint, 1.04);
        assert!((net.bus(2).unwrap().p_demand - 0.9).abs() < 1e-15);
        assert!((net.bus(2).unwrap().b_shunt - 0.19).abs() < 1e-15);
        assert_eq!(net.branches()[0].tap, 1.0);
        assert_eq!(net.branches()[1].tap, 0.98);
        assert_eq!(net.generators().len(), 1);
    }

    #[test]
    fn rejects_phase_shifters() {
        let src = MINI.replace("0.98	0	1", "0.98	5	1");
        assert!(convert_matpower(&src).is_err());
    }
}
