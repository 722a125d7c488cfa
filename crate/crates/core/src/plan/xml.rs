//! Plan-file serialization.
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <Experiment_plan chunk="0" replications="20">
//!   <Simulation id="0" seed="0" finalStep="720" experiment="desk" sourcePath="builtin">
//!     <Parameters>
//!       <Parameter name="basic_viral_release" type="FLOAT" value="0.01"/>
//!     </Parameters>
//!   </Simulation>
//! </Experiment_plan>
//! ```
//!
//! The parser is strict: unknown elements or attributes, missing attributes,
//! and inconsistent experiment metadata are all rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{Chunk, SimulationTask};
use crate::error::{Error, Result};
use crate::scalar::{Assignment, Scalar};

const ROOT: &str = "Experiment_plan";

pub fn chunk_file_name(chunk_id: u64) -> String {
    format!("plan-{chunk_id}.xml")
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_chunk_xml(chunk: &Chunk) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<{ROOT} chunk=\"{}\" replications=\"{}\">",
        chunk.chunk_id, chunk.replications
    );
    let experiment = escape(&chunk.experiment);
    let source = escape(&chunk.source_path);
    for task in &chunk.tasks {
        let _ = writeln!(
            out,
            "  <Simulation id=\"{}\" seed=\"{}\" finalStep=\"{}\" experiment=\"{experiment}\" sourcePath=\"{source}\">",
            task.task_id, task.seed, task.final_step
        );
        if task.assignment.is_empty() {
            out.push_str("    <Parameters/>\n");
        } else {
            out.push_str("    <Parameters>\n");
            for (name, value) in task.assignment.iter() {
                let _ = writeln!(
                    out,
                    "      <Parameter name=\"{}\" type=\"{}\" value=\"{}\"/>",
                    escape(name),
                    value.type_name(),
                    escape(&value.to_string())
                );
            }
            out.push_str("    </Parameters>\n");
        }
        out.push_str("  </Simulation>\n");
    }
    let _ = writeln!(out, "</{ROOT}>");
    out
}

/// Writes `plan-<chunkId>.xml` under `directory` and returns its path.
pub fn write_chunk_xml(chunk: &Chunk, directory: &Path) -> Result<PathBuf> {
    if directory.as_os_str().is_empty() {
        return Err(Error::io(
            directory,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty directory path"),
        ));
    }
    let path = directory.join(chunk_file_name(chunk.chunk_id));
    fs::write(&path, render_chunk_xml(chunk)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn parse_chunk_xml(path: &Path) -> Result<Chunk> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chunk_str(&text)
}

struct Parser<'a> {
    text: &'a str,
    reader: Reader<&'a [u8]>,
}

#[derive(Default)]
struct Header {
    experiment: Option<String>,
    source_path: Option<String>,
}

impl<'a> Parser<'a> {
    fn line(&self) -> usize {
        let pos = (self.reader.buffer_position() as usize).min(self.text.len());
        self.text.as_bytes()[..pos]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    }

    fn err(&self, context: &str, message: impl Into<String>) -> Error {
        Error::format(self.line(), context, message)
    }

    /// Next structural event; skips comments, rejects stray content.
    fn next(&mut self, context: &str) -> Result<Event<'a>> {
        loop {
            let event = self.reader.read_event().map_err(|e| {
                let pos = (self.reader.error_position() as usize).min(self.text.len());
                let line = self.text.as_bytes()[..pos]
                    .iter()
                    .filter(|&&b| b == b'\n')
                    .count()
                    + 1;
                Error::format(line, context, e.to_string())
            })?;
            match event {
                Event::Comment(_) => continue,
                Event::Text(t) => {
                    if t.iter().all(u8::is_ascii_whitespace) {
                        continue;
                    }
                    return Err(self.err(context, "unexpected text content"));
                }
                Event::CData(_) | Event::PI(_) | Event::DocType(_) => {
                    return Err(self.err(context, "unexpected markup"));
                }
                other => return Ok(other),
            }
        }
    }

    fn attributes(&self, element: &BytesStart, context: &str) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        for attr in element.attributes() {
            let attr = attr.map_err(|e| self.err(context, e.to_string()))?;
            let key = std::str::from_utf8(attr.key.as_ref())
                .map_err(|_| self.err(context, "attribute name is not UTF-8"))?
                .to_string();
            let value = attr
                .unescape_value()
                .map_err(|e| self.err(context, format!("attribute `{key}`: {e}")))?
                .into_owned();
            if out.iter().any(|(k, _)| *k == key) {
                return Err(self.err(context, format!("duplicate attribute `{key}`")));
            }
            out.push((key, value));
        }
        Ok(out)
    }

    /// Extracts exactly `names` from the attribute list, in that order.
    fn expect_attrs<const N: usize>(
        &self,
        element: &BytesStart,
        context: &str,
        names: [&str; N],
    ) -> Result<[String; N]> {
        let mut attrs = self.attributes(element, context)?;
        if let Some((k, _)) = attrs.iter().find(|(k, _)| !names.contains(&k.as_str())) {
            return Err(self.err(context, format!("unknown attribute `{k}`")));
        }
        let mut out: [String; N] = std::array::from_fn(|_| String::new());
        for (slot, name) in out.iter_mut().zip(names) {
            let idx = attrs
                .iter()
                .position(|(k, _)| k == name)
                .ok_or_else(|| self.err(context, format!("missing attribute `{name}`")))?;
            *slot = attrs.swap_remove(idx).1;
        }
        Ok(out)
    }

    fn number(&self, context: &str, name: &str, text: &str) -> Result<u64> {
        text.parse::<u64>().map_err(|_| {
            self.err(
                context,
                format!("`{name}` is not a non-negative integer: `{text}`"),
            )
        })
    }
}

fn element_name(element: &BytesStart) -> String {
    String::from_utf8_lossy(element.name().as_ref()).into_owned()
}

/// Parses a plan document. The chunk id and replication count come from the
/// root element; point and replication indices are derived from task ids.
pub fn parse_chunk_str(text: &str) -> Result<Chunk> {
    let mut reader = Reader::from_reader(text.as_bytes());
    reader.config_mut().check_end_names = true;
    let mut p = Parser { text, reader };

    // Prolog: optional declaration, then the root element.
    let root = loop {
        match p.next("prolog")? {
            Event::Decl(_) => continue,
            Event::Start(e) if element_name(&e) == ROOT => break e,
            Event::Empty(e) if element_name(&e) == ROOT => {
                return Err(p.err(ROOT, "plan contains no simulations"));
            }
            Event::Eof => return Err(p.err("prolog", "missing root element")),
            _ => return Err(p.err("prolog", format!("expected <{ROOT}>"))),
        }
    };
    let [chunk_text, reps_text] = p.expect_attrs(&root, ROOT, ["chunk", "replications"])?;
    let chunk_id = p.number(ROOT, "chunk", &chunk_text)?;
    let replications = p.number(ROOT, "replications", &reps_text)?;
    if replications == 0 {
        return Err(p.err(ROOT, "`replications` must be >= 1"));
    }

    let mut header = Header::default();
    let mut tasks: Vec<SimulationTask> = Vec::new();
    loop {
        match p.next(ROOT)? {
            Event::Start(e) if element_name(&e) == "Simulation" => {
                let task = parse_simulation(&mut p, &e, replications, &mut header)?;
                if let Some(prev) = tasks.last() {
                    if task.task_id <= prev.task_id {
                        return Err(
                            p.err("Simulation", "simulation ids must be strictly increasing")
                        );
                    }
                }
                tasks.push(task);
            }
            Event::End(e) if e.name().as_ref() == ROOT.as_bytes() => break,
            Event::Eof => return Err(p.err(ROOT, "unexpected end of document")),
            _ => return Err(p.err(ROOT, "expected <Simulation>")),
        }
    }
    if !matches!(p.next("epilog")?, Event::Eof) {
        return Err(p.err("epilog", "content after root element"));
    }
    if tasks.is_empty() {
        return Err(p.err(ROOT, "plan contains no simulations"));
    }

    Ok(Chunk {
        chunk_id,
        experiment: header.experiment.unwrap_or_default(),
        source_path: header.source_path.unwrap_or_default(),
        replications,
        tasks,
    })
}

fn parse_simulation(
    p: &mut Parser<'_>,
    element: &BytesStart,
    replications: u64,
    header: &mut Header,
) -> Result<SimulationTask> {
    const CTX: &str = "Simulation";
    let [id, seed, final_step, experiment, source_path] = p.expect_attrs(
        element,
        CTX,
        ["id", "seed", "finalStep", "experiment", "sourcePath"],
    )?;
    let task_id = p.number(CTX, "id", &id)?;
    let seed = p.number(CTX, "seed", &seed)?;
    let final_step = p.number(CTX, "finalStep", &final_step)?;
    if final_step == 0 {
        return Err(p.err(CTX, "`finalStep` must be >= 1"));
    }
    for (slot, value, name) in [
        (&mut header.experiment, experiment, "experiment"),
        (&mut header.source_path, source_path, "sourcePath"),
    ] {
        match slot {
            Some(existing) if *existing != value => {
                return Err(p.err(CTX, format!("`{name}` differs between simulations")));
            }
            Some(_) => {}
            None => *slot = Some(value),
        }
    }

    let mut assignment: Option<Assignment> = None;
    loop {
        match p.next(CTX)? {
            Event::Empty(e) if element_name(&e) == "Parameters" => {
                p.expect_attrs(&e, "Parameters", [])?;
                if assignment.replace(Assignment::default()).is_some() {
                    return Err(p.err(CTX, "duplicate <Parameters>"));
                }
            }
            Event::Start(e) if element_name(&e) == "Parameters" => {
                p.expect_attrs(&e, "Parameters", [])?;
                let parsed = parse_parameters(p)?;
                if assignment.replace(parsed).is_some() {
                    return Err(p.err(CTX, "duplicate <Parameters>"));
                }
            }
            Event::End(e) if e.name().as_ref() == CTX.as_bytes() => break,
            Event::Eof => return Err(p.err(CTX, "unexpected end of document")),
            _ => return Err(p.err(CTX, "expected <Parameters>")),
        }
    }
    let assignment = assignment.ok_or_else(|| p.err(CTX, "missing <Parameters>"))?;

    Ok(SimulationTask {
        task_id,
        point_index: task_id / replications,
        replication_index: task_id % replications,
        assignment,
        seed,
        final_step,
    })
}

fn parse_parameters(p: &mut Parser<'_>) -> Result<Assignment> {
    const CTX: &str = "Parameter";
    let mut out: Vec<(String, Scalar)> = Vec::new();
    loop {
        match p.next("Parameters")? {
            Event::Empty(e) if element_name(&e) == CTX => {
                let [name, ty, value] = p.expect_attrs(&e, CTX, ["name", "type", "value"])?;
                if name.is_empty() {
                    return Err(p.err(CTX, "empty parameter name"));
                }
                if out.iter().any(|(n, _)| *n == name) {
                    return Err(p.err(CTX, format!("duplicate parameter `{name}`")));
                }
                let scalar = Scalar::parse_typed(&ty, &value).map_err(|m| p.err(CTX, m))?;
                out.push((name, scalar));
            }
            Event::End(e) if e.name().as_ref() == b"Parameters" => break,
            Event::Eof => return Err(p.err("Parameters", "unexpected end of document")),
            _ => return Err(p.err("Parameters", "expected <Parameter/>")),
        }
    }
    Ok(Assignment(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{build_plan, chunk_plan, ExplorationConfig, ParameterSpec};
    use proptest::prelude::*;

    fn sample_chunk() -> Chunk {
        let specs = vec![
            ParameterSpec::continuous("basic_viral_release", 0.01, 0.1, 2).unwrap(),
            ParameterSpec::discrete("label", vec![Scalar::Str("a&b \"c\"".into())]).unwrap(),
        ];
        let mut cfg = ExplorationConfig::new("desk <test>", 1, 720);
        cfg.tasks_per_chunk = 2;
        let plan = build_plan(cfg, specs).unwrap();
        chunk_plan(&plan).unwrap().remove(0)
    }

    #[test]
    fn writes_one_simulation_per_task() {
        let dir = tempfile::tempdir().unwrap();
        let chunk = sample_chunk();
        let path = write_chunk_xml(&chunk, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "plan-0.xml");
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<Simulation ").count(), 2);
        assert!(text.contains("<Simulation id=\"0\" seed=\"0\" finalStep=\"720\""));
        assert!(text.contains("<Simulation id=\"1\" "));
        assert!(text.contains("type=\"FLOAT\" value=\"0.01\""));
        assert_eq!(parse_chunk_xml(&path).unwrap(), chunk);
        // stable bytes
        write_chunk_xml(&chunk, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn empty_directory_is_io_error() {
        assert!(matches!(
            write_chunk_xml(&sample_chunk(), Path::new("")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn empty_assignment_round_trips() {
        let plan = build_plan(ExplorationConfig::new("e", 3, 5), vec![]).unwrap();
        let chunk = chunk_plan(&plan).unwrap().remove(0);
        let text = render_chunk_xml(&chunk);
        assert!(text.contains("<Parameters/>"));
        assert_eq!(parse_chunk_str(&text).unwrap(), chunk);
    }

    fn mutated(from: &str, to: &str) -> Result<Chunk> {
        let text = render_chunk_xml(&sample_chunk());
        assert!(text.contains(from));
        parse_chunk_str(&text.replacen(from, to, 1))
    }

    #[test]
    fn missing_seed_is_format_error() {
        let err = mutated(" seed=\"0\"", "").unwrap_err();
        match err {
            Error::Format { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("seed"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_final_step_is_format_error() {
        assert!(matches!(
            mutated("finalStep=\"720\"", "finalStep=\"soon\""),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn other_malformations() {
        for (from, to) in [
            ("type=\"FLOAT\" value=\"0.01\"", "type=\"FLOAT\" value=\"x\""),
            ("type=\"FLOAT\"", "type=\"DOUBLE\""),
            ("<Simulation id=\"1\"", "<Simulation id=\"0\""),
            ("replications=\"1\"", "replications=\"0\""),
            ("</Experiment_plan>", ""),
            ("<Parameters>", "<Params>"),
            ("experiment=\"desk &lt;test&gt;\" sourcePath=\"builtin\">\n    <Parameters>\n      <Parameter name=\"basic_viral_release\" type=\"FLOAT\" value=\"0.1\"", "experiment=\"other\" sourcePath=\"builtin\">\n    <Parameters>\n      <Parameter name=\"basic_viral_release\" type=\"FLOAT\" value=\"0.1\""),
        ] {
            assert!(
                matches!(mutated(from, to), Err(Error::Format { .. })),
                "{from} -> {to}"
            );
        }
        assert!(parse_chunk_str("").is_err());
        assert!(parse_chunk_str("<Experiment_plan chunk=\"0\" replications=\"1\"/>").is_err());
    }

    fn arb_scalar() -> impl Strategy<Value = Scalar> {
        prop_oneof![
            any::<i64>().prop_map(Scalar::Int),
            any::<f64>()
                .prop_filter("finite", |v| v.is_finite())
                .prop_map(Scalar::Float),
            "[ -~\n\t]{0,12}".prop_map(Scalar::Str),
        ]
    }

    pub(crate) fn arb_chunk() -> impl Strategy<Value = Chunk> {
        (
            any::<u32>(),
            1u64..50,
            "[a-zA-Z0-9 _<>&\"']{1,10}",
            "[a-zA-Z0-9/._-]{1,20}",
            proptest::collection::vec(("[a-z_]{1,8}", arb_scalar()), 0..4),
            1usize..6,
            any::<u32>(),
            1u64..10_000,
        )
            .prop_map(
                |(chunk_id, reps, experiment, source, params, n, first_id, final_step)| {
                    let mut names = std::collections::HashSet::new();
                    let assignment = Assignment(
                        params
                            .into_iter()
                            .filter(|(n, _)| names.insert(n.clone()))
                            .collect(),
                    );
                    let tasks = (0..n as u64)
                        .map(|i| {
                            let id = first_id as u64 + i;
                            SimulationTask {
                                task_id: id,
                                point_index: id / reps,
                                replication_index: id % reps,
                                assignment: assignment.clone(),
                                seed: id % reps + 17,
                                final_step,
                            }
                        })
                        .collect();
                    Chunk {
                        chunk_id: chunk_id as u64,
                        experiment,
                        source_path: source,
                        replications: reps,
                        tasks,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn round_trip(chunk in arb_chunk()) {
            let text = render_chunk_xml(&chunk);
            let parsed = parse_chunk_str(&text).unwrap();
            prop_assert_eq!(&parsed, &chunk);
            prop_assert_eq!(render_chunk_xml(&parsed), text);
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            let _ = parse_chunk_str(&text);
        }
    }
}
