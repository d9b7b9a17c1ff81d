//! Parser for MATPOWER-style `.m` case text.
//!
//! Only the fields the DC model needs are read: `baseMVA`, the `bus`, `gen`
//! and `branch` matrices, and the optional `bus_name` cell array. Everything
//! else (`gencost`, version lines, comments) is skipped. A branch row with
//! `RATE_A <= 0` is treated as unrated (+inf), matching the MATPOWER
//! convention that 0 means unlimited.

use crate::error::{GridError, Result};
use crate::model::{Branch, BranchId, Bus, BusId, Generator, Network};

// MATPOWER column positions.
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const BUS_PD: usize = 2;
const BUS_COLS: usize = 3;

const GEN_BUS: usize = 0;
const GEN_PG: usize = 1;
const GEN_STATUS: usize = 7;
const GEN_PMAX: usize = 8;
const GEN_COLS: usize = 9;

const BR_F: usize = 0;
const BR_T: usize = 1;
const BR_X: usize = 3;
const BR_RATE_A: usize = 5;
const BR_TAP: usize = 8;
const BR_SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const BR_COLS: usize = 4;

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
    BusName,
    Skip,
}

pub fn parse_matpower_case(text: &str) -> Result<Network> {
    let mut base_mva = 100.0;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gen_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut section = Section::None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() || line.starts_with("function") {
            continue;
        }

        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let value = rest.trim_start_matches(['=', ' ', '\t']).trim_end_matches(';').trim();
            base_mva = value.parse().map_err(|_| GridError::Parse {
                line: lineno,
                message: format!("bad baseMVA value '{value}'"),
            })?;
            continue;
        }
        if let Some(new_section) = section_start(line) {
            section = new_section;
            // data may follow the opening bracket on the same line
            let after = line.split_once('[').or_else(|| line.split_once('{')).map(|x| x.1);
            match after {
                Some(rest) if !rest.trim().is_empty() => {
                    parse_row(rest, lineno, section, &mut bus_rows, &mut gen_rows, &mut branch_rows, &mut names)?
                }
                _ => {}
            }
            continue;
        }
        if line.starts_with("];") || line.starts_with("};") || line == "]" || line == "}" {
            section = Section::None;
            continue;
        }
        if line.starts_with("mpc.") {
            // unknown assignment (version, gencost scalar form, ...)
            section = if line.contains('[') || line.contains('{') { Section::Skip } else { Section::None };
            continue;
        }
        parse_row(line, lineno, section, &mut bus_rows, &mut gen_rows, &mut branch_rows, &mut names)?;
    }

    build_network(base_mva, bus_rows, gen_rows, branch_rows, names)
}

fn section_start(line: &str) -> Option<Section> {
    // bus_name must be matched before bus: both start with "mpc.bus"
    if line.starts_with("mpc.bus_name") {
        Some(Section::BusName)
    } else if line.starts_with("mpc.bus") {
        Some(Section::Bus)
    } else if line.starts_with("mpc.gencost") {
        Some(Section::Skip)
    } else if line.starts_with("mpc.gen") {
        Some(Section::Gen)
    } else if line.starts_with("mpc.branch") {
        Some(Section::Branch)
    } else {
        None
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_row(
    line: &str,
    lineno: usize,
    section: Section,
    bus_rows: &mut Vec<(usize, Vec<f64>)>,
    gen_rows: &mut Vec<(usize, Vec<f64>)>,
    branch_rows: &mut Vec<(usize, Vec<f64>)>,
    names: &mut Vec<String>,
) -> Result<()> {
    match section {
        Section::None | Section::Skip => Ok(()),
        Section::BusName => {
            let name = line.trim().trim_end_matches(';').trim();
            let name = name.trim_matches('\'').trim();
            if !name.is_empty() {
                names.push(name.to_string());
            }
            Ok(())
        }
        Section::Bus | Section::Gen | Section::Branch => {
            let row = numeric_row(line, lineno)?;
            if row.is_empty() {
                return Ok(());
            }
            let (min_cols, what, dest) = match section {
                Section::Bus => (BUS_COLS, "bus", bus_rows),
                Section::Gen => (GEN_COLS, "gen", gen_rows),
                _ => (BR_COLS, "branch", branch_rows),
            };
            if row.len() < min_cols {
                return Err(GridError::Parse {
                    line: lineno,
                    message: format!("{what} row has {} columns, expected at least {min_cols}", row.len()),
                });
            }
            dest.push((lineno, row));
            Ok(())
        }
    }
}

fn numeric_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    let cleaned = line.trim().trim_end_matches(';');
    cleaned
        .split([' ', '\t', ','])
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| GridError::Parse {
                line: lineno,
                message: format!("expected a number, found '{tok}'"),
            })
        })
        .collect()
}

fn build_network(
    base_mva: f64,
    bus_rows: Vec<(usize, Vec<f64>)>,
    gen_rows: Vec<(usize, Vec<f64>)>,
    branch_rows: Vec<(usize, Vec<f64>)>,
    names: Vec<String>,
) -> Result<Network> {
    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut slack = None;
    for (i, (lineno, row)) in bus_rows.iter().enumerate() {
        let id = BusId(row[BUS_I] as u32);
        if row[BUS_TYPE] as i64 == 3 {
            if let Some(existing) = slack {
                return Err(GridError::Parse {
                    line: *lineno,
                    message: format!("second slack bus {id}; bus {existing} is already type 3"),
                });
            }
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            load_mw: row[BUS_PD],
            name: names.get(i).cloned(),
        });
    }
    let slack_bus = slack.ok_or(GridError::MissingSlack)?;

    let generators = gen_rows
        .iter()
        .map(|(_, row)| {
            let in_service = row[GEN_STATUS] > 0.5;
            Generator {
                bus: BusId(row[GEN_BUS] as u32),
                // out-of-service units are kept with zero output
                output_mw: if in_service { row[GEN_PG] } else { 0.0 },
                max_output_mw: row[GEN_PMAX],
            }
        })
        .collect();

    let branches = branch_rows
        .iter()
        .enumerate()
        .map(|(i, (_, row))| {
            let rate = row.get(BR_RATE_A).copied().unwrap_or(0.0);
            let tap = row.get(BR_TAP).copied().unwrap_or(0.0);
            let shift = row.get(BR_SHIFT).copied().unwrap_or(0.0);
            Branch {
                id: BranchId(i as u32 + 1),
                from_bus: BusId(row[BR_F] as u32),
                to_bus: BusId(row[BR_T] as u32),
                reactance: row[BR_X],
                rating_mw: if rate > 0.0 { rate } else { f64::INFINITY },
                in_service: row.get(BR_STATUS).map_or(true, |s| *s > 0.5),
                is_transformer: tap != 0.0 || shift != 0.0,
            }
        })
        .collect();

    let net = Network { base_mva, slack_bus, buses, branches, generators };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "\
function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1.0	0	138	1	1.06	0.94;
	2	1	30	10	0	0	1	1.0	0	138	1	1.06	0.94;
	3	1	60	20	0	0	1	1.0	0	138	1	1.06	0.94;
];
mpc.gen = [
	1	90	0	50	-50	1.0	100	1	120	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	100	0	0	0	0	1	-360	360;
	1	3	0.01	0.1	0	100	0	0	0	0	1	-360	360;
	2	3	0.01	0.1	0	0	0	0	0.98	0	0	-360	360;
];
";

    #[test]
    fn parses_three_bus_case() {
        let net = parse_matpower_case(TINY).unwrap();
        assert_eq!(net.buses.len(), 3);
        assert_eq!(net.branches.len(), 3);
        assert_eq!(net.slack_bus, BusId(1));
        assert_eq!(net.base_mva, 100.0);
        // row 3: unrated, tapped, out of service
        let last = &net.branches[2];
        assert!(last.rating_mw.is_infinite());
        assert!(last.is_transformer);
        assert!(!last.in_service);
    }

    #[test]
    fn reports_line_number_for_malformed_row() {
        let broken = TINY.replace("	2	1	30", "	2	1	oops");
        let err = parse_matpower_case(&broken).unwrap_err();
        match err {
            GridError::Parse { line, message } => {
                assert_eq!(line, 6);
                assert!(message.contains("oops"), "{message}");
            }
            other => panic!("expected Parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_self_loop_branch() {
        let bad = TINY.replace("	1	2	0.01", "	1	1	0.01");
        assert!(matches!(
            parse_matpower_case(&bad),
            Err(GridError::SelfLoopBranch(BranchId(1)))
        ));
    }

    #[test]
    fn rejects_duplicate_bus_and_missing_slack() {
        let dup = TINY.replace("	3	1	60", "	2	1	60");
        assert!(matches!(parse_matpower_case(&dup), Err(GridError::DuplicateBus(BusId(2)))));
        let no_slack = TINY.replace("	1	3	0", "	1	2	0");
        assert!(matches!(parse_matpower_case(&no_slack), Err(GridError::MissingSlack)));
    }

    #[test]
    fn rejects_zero_reactance() {
        let bad = TINY.replace("	1	3	0.01	0.1", "	1	3	0.01	0.0");
        assert!(matches!(parse_matpower_case(&bad), Err(GridError::ZeroReactance(_))));
    }

    #[test]
    fn bus_names_attach_in_row_order() {
        let named = format!("{TINY}mpc.bus_name = {{\n\t'West End';\n\t'S.Tiffin';\n\t'Sorenson';\n}};\n");
        let net = parse_matpower_case(&named).unwrap();
        assert_eq!(net.buses[0].name.as_deref(), Some("West End"));
        assert_eq!(net.buses[2].name.as_deref(), Some("Sorenson"));
        assert_eq!(net.branch_label(BranchId(1)), "1 West End - 2 S.Tiffin");
    }
}
