use std::fmt::Display;
use std::fmt::Write as _;

use super::{FieldMatch, FlowTable};

const HEADER: [&str; 9] =
    ["priority", "ether_type", "arp_op", "arp_tpa", "ipv4_src", "ipv4_dst", "udp_src", "udp_dst", "action"];

fn cell<T: Display>(m: &FieldMatch<T>) -> String {
    match m {
        FieldMatch::Any => "*".to_string(),
        FieldMatch::Exact(v) => v.to_string(),
    }
}

/// Renders a table one entry per line, in lookup order, with `*` for
/// wildcard cells. Columns are padded so the output diffs cleanly.
pub fn dump_table(table: &FlowTable) -> String {
    let mut rows: Vec<[String; 9]> = vec![HEADER.map(String::from)];
    for e in table.entries() {
        let p = &e.pattern;
        let ether = match p.ether_type {
            FieldMatch::Any => "*".to_string(),
            FieldMatch::Exact(t) => format!("0x{t:04x}"),
        };
        rows.push([
            e.priority.to_string(),
            ether,
            cell(&p.arp_op),
            cell(&p.arp_tpa),
            cell(&p.ipv4_src),
            cell(&p.ipv4_dst),
            cell(&p.udp_src),
            cell(&p.udp_dst),
            e.action.to_string(),
        ]);
    }
    let mut widths = [0usize; 9];
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (i, c) in row.iter().enumerate() {
            if i + 1 == row.len() {
                line.push_str(c);
            } else {
                let _ = write!(line, "{c:<w$}  ", w = widths[i]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Action, EntryId, FlowEntry, MatchPattern, Terminal};

    #[test]
    fn wildcards_and_alignment() {
        let mut t = FlowTable::new();
        t.install(vec![
            FlowEntry {
                id: EntryId::new("a"),
                priority: 10,
                pattern: MatchPattern::any().ether_type(0x0800).udp_dst(53),
                action: Action::terminal(Terminal::ToController),
            },
            FlowEntry {
                id: EntryId::new("b"),
                priority: 9,
                pattern: MatchPattern::any().ether_type(0x0806),
                action: Action::terminal(Terminal::Drop),
            },
        ])
        .unwrap();
        let text = dump_table(&t);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("priority"));
        assert!(lines[1].starts_with("10        0x0800"));
        assert!(lines[1].ends_with("53       => CONTROLLER"));
        assert!(lines[2].ends_with("DROP"));
        let col = lines[0].find("action").unwrap();
        assert_eq!(lines[1].find("=>").unwrap(), col);
    }
}
