//! Feature catalog, per-program feature extraction and normalization.

mod detect;
mod lexer;
mod matrix;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use detect::extract_features;
pub use lexer::{tokenize, Lexed, Token};
pub use matrix::{normalize_columns, FeatureMatrix, FeatureVector};

const DEFAULT_CATALOG: &str = include_str!("default_catalog.txt");

/// Counting rule applied to comment- and string-stripped source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionRule {
    /// `[` tokens: subscripts and array declarators.
    Subscripts,
    /// `: <width>` members inside struct or union bodies.
    BitfieldMembers,
    /// Commas inside expression parentheses or brackets (not argument,
    /// parameter or initializer lists).
    CommaOperators,
    CompoundAssignments,
    ConstQualifiers,
    /// `/`, `%`, `/=` and `%=`.
    Divisions,
    /// Assignments nested inside an expression, or chained in one statement.
    EmbeddedAssignments,
    PreIncrements,
    PreDecrements,
    PostIncrements,
    PostDecrements,
    UnaryPlus,
    Gotos,
    /// `long long` type spellings.
    LongLongTypes,
    /// `int8_t` and `signed char`.
    Int8Types,
    /// `uint8_t` and `unsigned char`.
    Uint8Types,
    /// `float` and `double`.
    FloatingTypes,
    /// `int64_t`/`uint64_t` and integer literals with an `LL` suffix.
    Math64,
    InlineSpecifiers,
    /// Binary `*` and `*=`.
    Multiplications,
    /// `packed` attributes and `#pragma pack`.
    PackedAttributes,
    StructKeywords,
    UnionKeywords,
    VolatileQualifiers,
    /// Declarators or casts combining `volatile` with `*`.
    VolatilePointers,
    /// Declarators or casts combining `const` with `*`.
    ConstPointers,
    /// Variables declared at file scope.
    GlobalVariables,
    /// `__builtin_*` identifiers.
    Builtins,
    /// Unary `*`, unary `&` and `->`.
    PointerOperations,
    /// No source-level footprint; always counts 0.
    Undetectable,
}

impl DetectionRule {
    pub const ALL: [DetectionRule; 30] = [
        DetectionRule::Subscripts,
        DetectionRule::BitfieldMembers,
        DetectionRule::CommaOperators,
        DetectionRule::CompoundAssignments,
        DetectionRule::ConstQualifiers,
        DetectionRule::Divisions,
        DetectionRule::EmbeddedAssignments,
        DetectionRule::PreIncrements,
        DetectionRule::PreDecrements,
        DetectionRule::PostIncrements,
        DetectionRule::PostDecrements,
        DetectionRule::UnaryPlus,
        DetectionRule::Gotos,
        DetectionRule::LongLongTypes,
        DetectionRule::Int8Types,
        DetectionRule::Uint8Types,
        DetectionRule::FloatingTypes,
        DetectionRule::Math64,
        DetectionRule::InlineSpecifiers,
        DetectionRule::Multiplications,
        DetectionRule::PackedAttributes,
        DetectionRule::StructKeywords,
        DetectionRule::UnionKeywords,
        DetectionRule::VolatileQualifiers,
        DetectionRule::VolatilePointers,
        DetectionRule::ConstPointers,
        DetectionRule::GlobalVariables,
        DetectionRule::Builtins,
        DetectionRule::PointerOperations,
        DetectionRule::Undetectable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectionRule::Subscripts => "subscripts",
            DetectionRule::BitfieldMembers => "bitfield-members",
            DetectionRule::CommaOperators => "comma-operators",
            DetectionRule::CompoundAssignments => "compound-assignments",
            DetectionRule::ConstQualifiers => "const-qualifiers",
            DetectionRule::Divisions => "divisions",
            DetectionRule::EmbeddedAssignments => "embedded-assignments",
            DetectionRule::PreIncrements => "pre-increments",
            DetectionRule::PreDecrements => "pre-decrements",
            DetectionRule::PostIncrements => "post-increments",
            DetectionRule::PostDecrements => "post-decrements",
            DetectionRule::UnaryPlus => "unary-plus",
            DetectionRule::Gotos => "gotos",
            DetectionRule::LongLongTypes => "long-long-types",
            DetectionRule::Int8Types => "int8-types",
            DetectionRule::Uint8Types => "uint8-types",
            DetectionRule::FloatingTypes => "floating-types",
            DetectionRule::Math64 => "math64",
            DetectionRule::InlineSpecifiers => "inline-specifiers",
            DetectionRule::Multiplications => "multiplications",
            DetectionRule::PackedAttributes => "packed-attributes",
            DetectionRule::StructKeywords => "struct-keywords",
            DetectionRule::UnionKeywords => "union-keywords",
            DetectionRule::VolatileQualifiers => "volatile-qualifiers",
            DetectionRule::VolatilePointers => "volatile-pointers",
            DetectionRule::ConstPointers => "const-pointers",
            DetectionRule::GlobalVariables => "global-variables",
            DetectionRule::Builtins => "builtins",
            DetectionRule::PointerOperations => "pointer-operations",
            DetectionRule::Undetectable => "undetectable",
        }
    }
}

impl fmt::Display for DetectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        DetectionRule::ALL
            .iter()
            .copied()
            .find(|rule| rule.name() == s)
            .ok_or_else(|| format!("unknown detection rule `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub enable_flag: String,
    pub disable_flag: String,
    pub detector: DetectionRule,
}

/// Ordered set of generator-controllable features.
///
/// Index `i` names the same feature in every vector, centroid and
/// configuration produced against this catalog version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    version: String,
    features: Vec<FeatureSpec>,
}

impl FeatureCatalog {
    pub fn new(version: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        let catalog = FeatureCatalog {
            version: version.into(),
            features,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    /// The embedded catalog of the 32 Csmith 2.3 feature switches.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("embedded catalog is valid")
    }

    pub fn builtin_text() -> &'static str {
        DEFAULT_CATALOG
    }

    /// Reads a catalog file; the literal path `builtin` selects the embedded
    /// catalog.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == "builtin" {
            return Ok(Self::builtin());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the line-oriented catalog format:
    ///
    /// ```text
    /// # comment
    /// version = <tag>
    /// <name> <enable-flag> <disable-flag> <detection-rule>
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut features = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("version") {
                let Some(tag) = rest.trim_start().strip_prefix('=') else {
                    return Err(Error::CatalogParse {
                        line: line_no,
                        message: "expected `version = <tag>`".into(),
                    });
                };
                let tag = tag.trim();
                if tag.is_empty() {
                    return Err(Error::CatalogParse {
                        line: line_no,
                        message: "empty version tag".into(),
                    });
                }
                version = Some(tag.to_string());
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, enable, disable, detector] = fields[..] else {
                return Err(Error::CatalogParse {
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            };
            let detector = detector.parse().map_err(|message| Error::CatalogParse {
                line: line_no,
                message,
            })?;
            features.push(FeatureSpec {
                name: name.into(),
                enable_flag: enable.into(),
                disable_flag: disable.into(),
                detector,
            });
        }
        let version = version.ok_or(Error::CatalogParse {
            line: 0,
            message: "missing `version = <tag>` line".into(),
        })?;
        Self::new(version, features)
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Validation("catalog has no features".into()));
        }
        let mut seen = HashSet::new();
        for spec in &self.features {
            if spec.name.is_empty() {
                return Err(Error::Validation("feature with empty name".into()));
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate feature name `{}`",
                    spec.name
                )));
            }
            if spec.enable_flag == spec.disable_flag {
                return Err(Error::Validation(format!(
                    "feature `{}` uses `{}` for both inclusion and exclusion",
                    spec.name, spec.enable_flag
                )));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}
