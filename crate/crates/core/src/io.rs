//! Gene-model, reads and insert-histogram files, and result emission.
//!
//! Gene files are JSON:
//!
//! ```json
//! {"gene_id": "Rnpep", "exon_lengths": [200, 100, 200],
//!  "isoforms": [{"id": "long", "exons": [0, 1, 2]}, {"id": "short", "exons": [0, 2]}]}
//! ```
//!
//! Isoforms may also be given as bare exon-index arrays, in which case they
//! are named `iso1`, `iso2`, ...
//!
//! Reads files are tab-separated with columns
//! `read_id  mate1_start  mate2_end  isoforms`. Coordinates are 1-based on
//! the first isoform listed in the comma-separated `isoforms` column;
//! `mate2_end` is `.` for single-end reads. Blank lines and lines starting
//! with `#` are skipped, as is a header line beginning with `read_id`.
//!
//! Insert histograms are tab-separated `length  count` lines.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::collapse::CategorySet;
use crate::error::{Error, Result};
use crate::mle::ThetaEstimate;
use crate::model::{CountsVector, GeneModel, ReadKind, ReadType};
use crate::rates::InsertLengthDist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IsoformSpec {
    Named { id: String, exons: Vec<usize> },
    Bare(Vec<usize>),
}

/// On-disk form of a [`GeneModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneSpec {
    pub gene_id: String,
    pub exon_lengths: Vec<u32>,
    pub isoforms: Vec<IsoformSpec>,
}

impl TryFrom<GeneSpec> for GeneModel {
    type Error = Error;

    fn try_from(spec: GeneSpec) -> Result<Self> {
        let isoforms = spec
            .isoforms
            .into_iter()
            .enumerate()
            .map(|(i, iso)| match iso {
                IsoformSpec::Named { id, exons } => (id, exons),
                IsoformSpec::Bare(exons) => (format!("iso{}", i + 1), exons),
            })
            .collect();
        GeneModel::with_ids(spec.gene_id, spec.exon_lengths, isoforms)
    }
}

impl From<GeneModel> for GeneSpec {
    fn from(gene: GeneModel) -> Self {
        GeneSpec {
            exon_lengths: gene.exon_lengths().to_vec(),
            isoforms: gene
                .isoforms()
                .iter()
                .map(|iso| IsoformSpec::Named { id: iso.id.clone(), exons: iso.exons.clone() })
                .collect(),
            gene_id: gene.gene_id,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::parse(path.display().to_string(), format!("not UTF-8: {e}")))
}

pub fn parse_gene_str(text: &str, source: &str) -> Result<GeneModel> {
    let spec: GeneSpec = serde_json::from_str(text)
        .map_err(|e| Error::parse(source, format!("line {}, column {}: {e}", e.line(), e.column())))?;
    GeneModel::try_from(spec).map_err(|e| Error::parse(source, e.to_string()))
}

pub fn parse_gene_file(path: impl AsRef<Path>) -> Result<GeneModel> {
    let path = path.as_ref();
    parse_gene_str(&read_text(path)?, &path.display().to_string())
}

pub fn gene_to_json(gene: &GeneModel) -> String {
    serde_json::to_string_pretty(&GeneSpec::from(gene.clone())).expect("gene specs always serialize")
}

pub fn write_gene_file(path: impl AsRef<Path>, gene: &GeneModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, gene_to_json(gene) + "\n").map_err(|e| Error::io(path, e))
}

/// Fragment lengths implied by one paired record on each isoform it was
/// placed on, primary placement first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImputedLengths {
    pub read_id: String,
    pub per_isoform: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for RejectedLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReads {
    /// Counts over read types; `total` is the number of accepted records.
    pub counts: CountsVector,
    pub fragment_lengths: Vec<ImputedLengths>,
    pub rejected: Vec<RejectedLine>,
}

impl ParsedReads {
    /// Fragment length of each paired record on its primary isoform.
    pub fn primary_lengths(&self) -> Vec<u32> {
        self.fragment_lengths.iter().filter_map(|f| f.per_isoform.first().map(|&(_, l)| l)).collect()
    }

    /// Fails with every rejected line when any record was rejected.
    pub fn into_strict(self, source: &str) -> Result<Self> {
        if self.rejected.is_empty() {
            return Ok(self);
        }
        let lines: Vec<String> = self.rejected.iter().map(ToString::to_string).collect();
        Err(Error::parse(source, lines.join("\n")))
    }
}

fn parse_record(
    gene: &GeneModel,
    fields: &[&str],
    read_length: u32,
) -> std::result::Result<(ReadType, Option<ImputedLengths>), String> {
    let [read_id, start, end, isoforms] = fields else {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    };
    let ids: Vec<&str> = isoforms.split(',').map(str::trim).collect();
    let mut placed = Vec::with_capacity(ids.len());
    for id in &ids {
        let i = gene.isoform_index(id).ok_or_else(|| format!("unknown isoform id {id:?}"))?;
        if placed.contains(&i) {
            return Err(format!("isoform {id:?} listed twice"));
        }
        placed.push(i);
    }
    let primary = placed[0];
    let len = gene.isoforms()[primary].length();
    let start: u32 = start.parse().map_err(|_| format!("mate1_start {start:?} is not a positive integer"))?;
    if start == 0 || start > len {
        return Err(format!("mate1_start {start} outside isoform {} (length {len})", ids[0]));
    }
    let read = if *end == "." {
        gene.single_read(primary, start, read_length)
    } else {
        let end: u32 = end.parse().map_err(|_| format!("mate2_end {end:?} is not a positive integer or '.'"))?;
        if end < start || end > len {
            return Err(format!("mate2_end {end} outside [{start}, {len}] on isoform {}", ids[0]));
        }
        gene.paired_read(primary, start, end - start + 1, read_length)
    }
    .map_err(|e| e.to_string())?;
    for (&i, id) in placed.iter().zip(&ids) {
        if !read.is_compatible(i) {
            return Err(format!("read cannot be placed on listed isoform {id:?}"));
        }
    }
    let lengths = (read.kind() == ReadKind::Paired).then(|| ImputedLengths {
        read_id: read_id.to_string(),
        per_isoform: placed.iter().map(|&i| (i, read.fragment_length(i).expect("compatibility checked"))).collect(),
    });
    Ok((read, lengths))
}

/// Parses a reads table. Lines that cannot be used are collected in
/// [`ParsedReads::rejected`] with the reason.
pub fn parse_reads_str(text: &str, gene: &GeneModel, read_length: u32) -> Result<ParsedReads> {
    if read_length == 0 {
        return Err(Error::InvalidProtocol("read length must be positive".into()));
    }
    let mut tally: HashMap<ReadType, u64> = HashMap::new();
    let mut fragment_lengths = Vec::new();
    let mut rejected = Vec::new();
    let mut accepted = 0u64;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || (k == 0 && line.starts_with("read_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match parse_record(gene, &fields, read_length) {
            Ok((read, lengths)) => {
                *tally.entry(read).or_default() += 1;
                fragment_lengths.extend(lengths);
                accepted += 1;
            }
            Err(reason) => rejected.push(RejectedLine { line: k + 1, reason }),
        }
    }
    if accepted == 0 {
        let mut msg = String::from("no usable read records");
        for r in &rejected {
            msg.push_str(&format!("\n{r}"));
        }
        return Err(Error::InvalidArgument(msg));
    }
    let counts = CountsVector::new(tally.into_iter().collect(), accepted)?;
    Ok(ParsedReads { counts, fragment_lengths, rejected })
}

pub fn parse_reads_file(path: impl AsRef<Path>, gene: &GeneModel, read_length: u32) -> Result<ParsedReads> {
    parse_reads_str(&read_text(path.as_ref())?, gene, read_length)
}

/// One line per read type with positive count, on the first compatible
/// isoform; parsing the output reproduces the counts.
pub fn counts_to_reads_tsv(gene: &GeneModel, counts: &CountsVector) -> String {
    let mut out = String::from("read_id\tmate1_start\tmate2_end\tisoforms\n");
    let mut serial = 0;
    for (read, count) in counts.iter() {
        let placed: Vec<usize> = read.compatible_isoforms().collect();
        let p = read.placement(placed[0]).expect("compatible isoform has a placement");
        let end = match read.kind() {
            ReadKind::Single => ".".to_string(),
            ReadKind::Paired => p.end.to_string(),
        };
        let ids: Vec<&str> = placed.iter().map(|&i| gene.isoforms()[i].id.as_str()).collect();
        for _ in 0..count {
            serial += 1;
            out.push_str(&format!("r{serial}\t{}\t{end}\t{}\n", p.start, ids.join(",")));
        }
    }
    out
}

pub fn parse_insert_histogram_str(text: &str, source: &str) -> Result<InsertLengthDist> {
    let mut hist = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line.starts_with("length")) {
            continue;
        }
        let bad = || Error::parse(source, format!("line {}: expected `length<TAB>count`, got {line:?}", k + 1));
        let mut fields = line.split('\t');
        let (Some(l), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad());
        };
        let l: u32 = l.trim().parse().map_err(|_| bad())?;
        let c: u64 = c.trim().parse().map_err(|_| bad())?;
        let slot = hist.entry(l).or_insert(0u64);
        *slot = slot.checked_add(c).ok_or_else(|| Error::parse(source, format!("line {}: count overflow", k + 1)))?;
    }
    if hist.values().try_fold(0u64, |acc, &c| acc.checked_add(c)).is_none() {
        return Err(Error::parse(source, "histogram total overflows"));
    }
    InsertLengthDist::from_histogram(hist).map_err(|e| Error::parse(source, e.to_string()))
}

pub fn parse_insert_histogram(path: impl AsRef<Path>) -> Result<InsertLengthDist> {
    let path = path.as_ref();
    parse_insert_histogram_str(&read_text(path)?, &path.display().to_string())
}

pub fn insert_histogram_to_tsv(q: &InsertLengthDist) -> String {
    let mut out = String::from("length\tcount\n");
    for (l, c) in q.histogram() {
        out.push_str(&format!("{l}\t{c}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    /// Canonical direction, as `p/q` strings.
    pub direction: Vec<String>,
    /// `a^(k)`.
    pub rates: Vec<f64>,
    pub count: u64,
    pub members: usize,
}

pub fn summarize_categories(cats: &CategorySet) -> Vec<CategorySummary> {
    cats.categories()
        .iter()
        .zip(cats.rates())
        .map(|(c, rates)| CategorySummary {
            direction: c.direction.iter().map(ToString::to_string).collect(),
            rates,
            count: c.count,
            members: c.members,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Everything `estimate` reports, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub isoforms: Vec<String>,
    pub theta: Vec<f64>,
    pub rpkm: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rpkm_intervals: Option<Vec<Interval>>,
    pub categories_summary: Vec<CategorySummary>,
}

impl EstimateReport {
    pub fn new(
        gene: &GeneModel,
        estimate: &ThetaEstimate,
        intervals: Option<&[(f64, f64)]>,
        categories: &CategorySet,
    ) -> Self {
        EstimateReport {
            isoforms: gene.isoforms().iter().map(|i| i.id.clone()).collect(),
            theta: estimate.theta.clone(),
            rpkm: estimate.rpkm(),
            objective: estimate.objective,
            kkt_residual: estimate.kkt_residual,
            iterations: estimate.iterations,
            converged: estimate.converged,
            rpkm_intervals: intervals.map(|iv| {
                iv.iter().map(|&(lower, upper)| Interval { lower: lower * 1e9, upper: upper * 1e9 }).collect()
            }),
            categories_summary: summarize_categories(categories),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Tsv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "tsv" => Ok(Format::Tsv),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

/// Leaf values of a JSON document as `(dotted path, value)` rows in document
/// order; array elements are addressed by index.
pub fn flatten_json(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(map) => map.iter().for_each(|(k, v)| walk(&join(k), v, out)),
            Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

pub fn render_report(report: &EstimateReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("reports always serialize") + "\n",
        Format::Tsv => {
            let value = serde_json::to_value(report).expect("reports always serialize");
            let mut out = String::from("field\tvalue\n");
            for (k, v) in flatten_json(&value) {
                out.push_str(&format!("{k}\t{v}\n"));
            }
            out
        }
    }
}

/// Writes the estimate report. Nothing is written when `categories` is
/// empty.
pub fn emit_results(
    gene: &GeneModel,
    estimate: &ThetaEstimate,
    intervals: Option<&[(f64, f64)]>,
    categories: &CategorySet,
    format: Format,
    path: impl AsRef<Path>,
) -> Result<()> {
    if categories.is_empty() {
        return Err(Error::InvalidArgument("no categories to report".into()));
    }
    let text = render_report(&EstimateReport::new(gene, estimate, intervals, categories), format);
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
