//! Ontology of the academic knowledge graph.
//!
//! Fifteen entity kinds, seventeen named relations and the 29 legal
//! `(source, target)` signatures those relations expand to. Every other
//! module validates against this table. Cross-element query paths always
//! pivot through a paper's `Title` node, so path resolution is a lookup
//! rather than a search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node types of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Title,
    Author,
    Institution,
    Conference,
    Date,
    Field,
    Keywords,
    Innovation,
    Method,
    Problem,
    Model,
    Task,
    Dataset,
    Metric,
    Result,
}

impl EntityKind {
    pub const ALL: [EntityKind; 15] = [
        EntityKind::Title,
        EntityKind::Author,
        EntityKind::Institution,
        EntityKind::Conference,
        EntityKind::Date,
        EntityKind::Field,
        EntityKind::Keywords,
        EntityKind::Innovation,
        EntityKind::Method,
        EntityKind::Problem,
        EntityKind::Model,
        EntityKind::Task,
        EntityKind::Dataset,
        EntityKind::Metric,
        EntityKind::Result,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Title => "Title",
            EntityKind::Author => "Author",
            EntityKind::Institution => "Institution",
            EntityKind::Conference => "Conference",
            EntityKind::Date => "Date",
            EntityKind::Field => "Field",
            EntityKind::Keywords => "Keywords",
            EntityKind::Innovation => "Innovation",
            EntityKind::Method => "Method",
            EntityKind::Problem => "Problem",
            EntityKind::Model => "Model",
            EntityKind::Task => "Task",
            EntityKind::Dataset => "Dataset",
            EntityKind::Metric => "Metric",
            EntityKind::Result => "Result",
        }
    }

    /// One-line description of the kind, used as the element introduction
    /// handed to the answering prompts.
    pub fn introduction(self) -> &'static str {
        match self {
            EntityKind::Title => "title: Title of the paper.",
            EntityKind::Task => "task: Task of the paper.",
            EntityKind::Field => "field: Research field of the paper.",
            EntityKind::Method => "method: Method of the paper.",
            EntityKind::Problem => "problem: Problem the paper aims to solve.",
            EntityKind::Model => "model: Model used in the paper.",
            EntityKind::Dataset => "dataset: Dataset used in the paper.",
            EntityKind::Author => "author: The author of the paper.",
            EntityKind::Institution => "institution: Author's institution.",
            EntityKind::Conference => {
                "conference: Conference or journal in which the paper is published."
            }
            EntityKind::Date => "date: Date of publication of the paper.",
            EntityKind::Keywords => "keywords: The topic phrase of the paper.",
            EntityKind::Innovation => "innovation: The main innovation points of the paper.",
            EntityKind::Metric => "metric: Metric used in the experiment.",
            EntityKind::Result => "result: The main experimental results of the model.",
        }
    }

    /// Label used inside prompts ("task", "method", ...).
    pub fn label(self) -> &'static str {
        match self {
            EntityKind::Title => "title",
            EntityKind::Author => "author",
            EntityKind::Institution => "institution",
            EntityKind::Conference => "conference",
            EntityKind::Date => "date",
            EntityKind::Field => "field",
            EntityKind::Keywords => "keywords",
            EntityKind::Innovation => "innovation",
            EntityKind::Method => "method",
            EntityKind::Problem => "problem",
            EntityKind::Model => "model",
            EntityKind::Task => "task",
            EntityKind::Dataset => "dataset",
            EntityKind::Metric => "metric",
            EntityKind::Result => "result",
        }
    }

    /// Kinds that come straight from paper metadata, without any LLM call.
    pub fn is_metadata(self) -> bool {
        matches!(
            self,
            EntityKind::Title
                | EntityKind::Author
                | EntityKind::Institution
                | EntityKind::Conference
                | EntityKind::Date
        )
    }

    /// Kinds subject to clustering-based disambiguation.
    pub fn is_disambiguated(self) -> bool {
        matches!(self, EntityKind::Task | EntityKind::Dataset | EntityKind::Metric)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_lowercase();
        let kind = match folded.as_str() {
            "title" => EntityKind::Title,
            "author" => EntityKind::Author,
            "institution" => EntityKind::Institution,
            "conference" => EntityKind::Conference,
            "date" => EntityKind::Date,
            "field" | "research field" => EntityKind::Field,
            "keywords" | "keyword" => EntityKind::Keywords,
            "innovation" => EntityKind::Innovation,
            "method" => EntityKind::Method,
            "problem" => EntityKind::Problem,
            "model" => EntityKind::Model,
            "task" => EntityKind::Task,
            "dataset" => EntityKind::Dataset,
            "metric" => EntityKind::Metric,
            "result" => EntityKind::Result,
            _ => return Err(SchemaError::UnknownEntityKind(s.to_string())),
        };
        Ok(kind)
    }
}

/// Whether a relation connects elements of one paper or two papers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationClass {
    IntraPaper,
    InterPaper,
}

/// Edge types of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Writes,
    WorksFor,
    Publishes,
    IsWrittenIn,
    BelongsTo,
    Keywords,
    Solves,
    Adopts,
    Proposes,
    WorksOn,
    Innovates,
    ExperimentsOn,
    Uses,
    Faces,
    Achieves,
    DirectUse,
    TaskRelated,
}

impl RelationKind {
    pub const ALL: [RelationKind; 17] = [
        RelationKind::Writes,
        RelationKind::WorksFor,
        RelationKind::Publishes,
        RelationKind::IsWrittenIn,
        RelationKind::BelongsTo,
        RelationKind::Keywords,
        RelationKind::Solves,
        RelationKind::Adopts,
        RelationKind::Proposes,
        RelationKind::WorksOn,
        RelationKind::Innovates,
        RelationKind::ExperimentsOn,
        RelationKind::Uses,
        RelationKind::Faces,
        RelationKind::Achieves,
        RelationKind::DirectUse,
        RelationKind::TaskRelated,
    ];

    /// Snake-case identifier used in files and on the wire.
    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Writes => "writes",
            RelationKind::WorksFor => "works_for",
            RelationKind::Publishes => "publishes",
            RelationKind::IsWrittenIn => "is_written_in",
            RelationKind::BelongsTo => "belongs_to",
            RelationKind::Keywords => "keywords",
            RelationKind::Solves => "solves",
            RelationKind::Adopts => "adopts",
            RelationKind::Proposes => "proposes",
            RelationKind::WorksOn => "works_on",
            RelationKind::Innovates => "innovates",
            RelationKind::ExperimentsOn => "experiments_on",
            RelationKind::Uses => "uses",
            RelationKind::Faces => "faces",
            RelationKind::Achieves => "achieves",
            RelationKind::DirectUse => "direct_use",
            RelationKind::TaskRelated => "task_related",
        }
    }

    /// Human-facing name as spelled in the ontology table.
    pub fn display_name(self) -> &'static str {
        match self {
            RelationKind::Writes => "writes",
            RelationKind::WorksFor => "works for",
            RelationKind::Publishes => "publishes",
            RelationKind::IsWrittenIn => "is written in",
            RelationKind::BelongsTo => "belongs to",
            RelationKind::Keywords => "keywords",
            RelationKind::Solves => "solves",
            RelationKind::Adopts => "adopts",
            RelationKind::Proposes => "proposes",
            RelationKind::WorksOn => "works on",
            RelationKind::Innovates => "innovates",
            RelationKind::ExperimentsOn => "experiments on",
            RelationKind::Uses => "uses",
            RelationKind::Faces => "faces",
            RelationKind::Achieves => "achieves",
            RelationKind::DirectUse => "Direct use",
            RelationKind::TaskRelated => "Task correlation",
        }
    }

    pub fn class(self) -> RelationClass {
        match self {
            RelationKind::DirectUse | RelationKind::TaskRelated => RelationClass::InterPaper,
            _ => RelationClass::IntraPaper,
        }
    }

    pub fn is_inter_paper(self) -> bool {
        self.class() == RelationClass::InterPaper
    }

    /// Legal `(source, target)` pairs for this relation.
    pub fn signatures(self) -> &'static [(EntityKind, EntityKind)] {
        use EntityKind::*;
        match self {
            RelationKind::Writes => &[(Author, Title)],
            RelationKind::WorksFor => &[(Author, Institution)],
            RelationKind::Publishes => &[(Title, Conference)],
            RelationKind::IsWrittenIn => &[(Title, Date)],
            RelationKind::BelongsTo => &[(Title, Field)],
            RelationKind::Keywords => &[(Title, Keywords)],
            RelationKind::Solves => &[(Title, Problem), (Method, Problem), (Model, Problem)],
            RelationKind::Adopts => &[(Title, Method)],
            RelationKind::Proposes => &[(Title, Model), (Method, Model)],
            RelationKind::WorksOn => &[(Title, Task), (Method, Task), (Model, Task)],
            RelationKind::Innovates => &[(Title, Innovation), (Method, Innovation)],
            RelationKind::ExperimentsOn => &[(Title, Dataset), (Task, Dataset), (Model, Dataset)],
            RelationKind::Uses => &[(Title, Metric), (Task, Metric), (Model, Metric)],
            RelationKind::Faces => &[(Task, Problem)],
            RelationKind::Achieves => &[(Title, Result), (Method, Result), (Model, Result)],
            RelationKind::DirectUse => &[(Title, Title)],
            RelationKind::TaskRelated => &[(Title, Title)],
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = SchemaError;

    /// Accepts the snake-case identifier or the display spelling, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let key = match key.as_str() {
            "task_correlation" => "task_related",
            "date" => "is_written_in",
            other => other,
        }
        .to_string();
        RelationKind::ALL
            .into_iter()
            .find(|r| r.name() == key)
            .ok_or_else(|| SchemaError::UnknownRelation(s.to_string()))
    }
}

/// One legal edge shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationSignature {
    pub relation: RelationKind,
    pub source: EntityKind,
    pub target: EntityKind,
}

impl fmt::Display for RelationSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.source, self.relation, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema violation: ({subject}, {relation}, {object}) is not a legal triple shape; legal signatures for {relation}: {legal}")]
    Violation {
        subject: EntityKind,
        relation: RelationKind,
        object: EntityKind,
        legal: String,
    },
    #[error("no path from {source_kind} to {target_kind} through a Title node")]
    NoPath {
        source_kind: EntityKind,
        target_kind: EntityKind,
    },
    #[error("unknown entity kind `{0}`")]
    UnknownEntityKind(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
}

/// Legal `(source, target)` pairs for `kind`.
pub fn relation_signatures(kind: RelationKind) -> &'static [(EntityKind, EntityKind)] {
    kind.signatures()
}

/// All 29 signatures, in relation order.
pub fn all_signatures() -> Vec<RelationSignature> {
    RelationKind::ALL
        .into_iter()
        .flat_map(|relation| {
            relation
                .signatures()
                .iter()
                .map(move |&(source, target)| RelationSignature {
                    relation,
                    source,
                    target,
                })
        })
        .collect()
}

pub fn validate_triple(
    subject: EntityKind,
    relation: RelationKind,
    object: EntityKind,
) -> Result<(), SchemaError> {
    if relation.signatures().contains(&(subject, object)) {
        return Ok(());
    }
    let legal = relation
        .signatures()
        .iter()
        .map(|(s, t)| format!("{s}->{t}"))
        .collect::<Vec<_>>()
        .join(", ");
    Err(SchemaError::Violation {
        subject,
        relation,
        object,
        legal,
    })
}

/// Orientation of a triple after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    AsGiven,
    Reversed,
}

/// Accepts a triple shape written in either direction.
///
/// Source data sometimes states a relation object-first (a venue that
/// "publishes" a title). The stored direction is always the one in the
/// signature table; `Reversed` tells the caller to swap endpoints.
pub fn normalize_direction(
    subject: EntityKind,
    relation: RelationKind,
    object: EntityKind,
) -> Result<Orientation, SchemaError> {
    match validate_triple(subject, relation, object) {
        Ok(()) => Ok(Orientation::AsGiven),
        Err(err) => {
            if validate_triple(object, relation, subject).is_ok() {
                Ok(Orientation::Reversed)
            } else {
                Err(err)
            }
        }
    }
}

/// Direction of travel along an edge, relative to the current node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outbound,
    Inbound,
    Both,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "out" | "outbound" => Ok(Direction::Outbound),
            "in" | "inbound" => Ok(Direction::Inbound),
            "both" => Ok(Direction::Both),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub relation: RelationKind,
    pub direction: Direction,
    /// Kind of the node reached by this hop.
    pub arrives_at: EntityKind,
}

/// A typed walk through the graph starting at a node of kind `start`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSpec {
    pub start: EntityKind,
    pub hops: Vec<Hop>,
}

impl PathSpec {
    pub fn end(&self) -> EntityKind {
        self.hops.last().map_or(self.start, |h| h.arrives_at)
    }

    /// Kinds visited in order, including the start.
    pub fn kinds(&self) -> Vec<EntityKind> {
        std::iter::once(self.start)
            .chain(self.hops.iter().map(|h| h.arrives_at))
            .collect()
    }

    fn concat(mut self, other: PathSpec) -> PathSpec {
        debug_assert_eq!(self.end(), other.start);
        self.hops.extend(other.hops);
        self
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for hop in &self.hops {
            let arrow = match hop.direction {
                Direction::Inbound => "<-",
                _ => "->",
            };
            write!(f, " {arrow}[{}] {}", hop.relation, hop.arrives_at)?;
        }
        Ok(())
    }
}

/// Relation attaching `kind` directly to a Title, with the Title on one end.
///
/// Returns the relation and whether the Title is the signature's source.
/// Among several candidates the relation with the fewest signatures wins,
/// then enumeration order.
fn title_link(kind: EntityKind) -> Option<(RelationKind, bool)> {
    RelationKind::ALL
        .into_iter()
        .filter(|r| !r.is_inter_paper())
        .filter_map(|r| {
            let sigs = r.signatures();
            if sigs.contains(&(EntityKind::Title, kind)) {
                Some((sigs.len(), r, true))
            } else if sigs.contains(&(kind, EntityKind::Title)) {
                Some((sigs.len(), r, false))
            } else {
                None
            }
        })
        .min_by_key(|&(arity, r, _)| (arity, r))
        .map(|(_, r, title_is_source)| (r, title_is_source))
}

/// Path from a node of `kind` to the Title(s) it belongs to.
///
/// Institutions have no relation touching a Title; they reach it through
/// the authors that work for them.
pub fn path_to_title(kind: EntityKind) -> Result<PathSpec, SchemaError> {
    if kind == EntityKind::Title {
        return Ok(PathSpec {
            start: kind,
            hops: Vec::new(),
        });
    }
    if let Some((relation, title_is_source)) = title_link(kind) {
        let direction = if title_is_source {
            Direction::Inbound
        } else {
            Direction::Outbound
        };
        return Ok(PathSpec {
            start: kind,
            hops: vec![Hop {
                relation,
                direction,
                arrives_at: EntityKind::Title,
            }],
        });
    }
    if kind == EntityKind::Institution {
        let via_author = Hop {
            relation: RelationKind::WorksFor,
            direction: Direction::Inbound,
            arrives_at: EntityKind::Author,
        };
        return Ok(PathSpec {
            start: kind,
            hops: vec![via_author],
        }
        .concat(path_to_title(EntityKind::Author)?));
    }
    Err(SchemaError::NoPath {
        source_kind: kind,
        target_kind: EntityKind::Title,
    })
}

/// Path from a Title to the elements of `kind` attached to it.
pub fn path_from_title(kind: EntityKind) -> Result<PathSpec, SchemaError> {
    let inbound = path_to_title(kind).map_err(|_| SchemaError::NoPath {
        source_kind: EntityKind::Title,
        target_kind: kind,
    })?;
    // Reverse the walk: same relations, opposite directions, mirrored kinds.
    let kinds = inbound.kinds();
    let hops = inbound
        .hops
        .iter()
        .enumerate()
        .rev()
        .map(|(i, hop)| Hop {
            relation: hop.relation,
            direction: match hop.direction {
                Direction::Inbound => Direction::Outbound,
                Direction::Outbound => Direction::Inbound,
                Direction::Both => Direction::Both,
            },
            arrives_at: kinds[i],
        })
        .collect();
    Ok(PathSpec {
        start: EntityKind::Title,
        hops,
    })
}

/// Retrieval-free path from `source` to `target`, pivoting through exactly
/// one Title node.
pub fn canonical_path(source: EntityKind, target: EntityKind) -> Result<PathSpec, SchemaError> {
    let no_path = || SchemaError::NoPath {
        source_kind: source,
        target_kind: target,
    };
    let up = path_to_title(source).map_err(|_| no_path())?;
    let down = path_from_title(target).map_err(|_| no_path())?;
    Ok(up.concat(down))
}

/// Self-describing export of the ontology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub entity_kinds: Vec<EntityKindInfo>,
    pub relations: Vec<RelationInfo>,
    pub signatures: Vec<RelationSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityKindInfo {
    pub name: EntityKind,
    pub introduction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationInfo {
    pub name: RelationKind,
    pub display_name: String,
    pub class: RelationClass,
}

pub fn schema_document() -> SchemaDocument {
    SchemaDocument {
        entity_kinds: EntityKind::ALL
            .into_iter()
            .map(|k| EntityKindInfo {
                name: k,
                introduction: k.introduction().to_string(),
            })
            .collect(),
        relations: RelationKind::ALL
            .into_iter()
            .map(|r| RelationInfo {
                name: r,
                display_name: r.display_name().to_string(),
                class: r.class(),
            })
            .collect(),
        signatures: all_signatures(),
    }
}
