use std::io::{self, Write};

/// One explored node.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub branch: String,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

pub const TRACE_HEADER: &str = "id,parent,lb,ub,branch,wall_time";

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the records as CSV with a header row.
pub fn write_trace_csv(records: &[TraceRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.id,
            r.parent.map(|p| p.to_string()).unwrap_or_default(),
            r.lower_bound,
            r.upper_bound,
            quote(&r.branch),
            r.wall_time
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let recs = vec![
            TraceRecord {
                id: 0,
                parent: None,
                lower_bound: 1.0,
                upper_bound: 5.0,
                branch: "root".into(),
                wall_time: 0.25,
            },
            TraceRecord {
                id: 1,
                parent: Some(0),
                lower_bound: -0.5,
                upper_bound: f64::INFINITY,
                branch: "a,b".into(),
                wall_time: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "id,parent,lb,ub,branch,wall_time\n0,,1,5,root,0.250000\n1,0,-0.5,inf,\"a,b\",1.000000\n"
        );
    }
}
