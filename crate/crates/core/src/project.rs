//! Loading specification files and the built-in trait library.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diag::{Diagnostic, Span};
use crate::syntax::ast::{InteractionUnit, RoleUnit, SourceUnit, TraitUnit, UnitKind};
use crate::syntax::parse_unit;

/// Environment variable naming an alternative trait library directory.
pub const LIB_ENV: &str = "TIERSPEC_LIB";

/// The built-in trait library, compiled into the binary.
pub const BUILTIN_LIBRARY: &[(&str, &str)] = &[
    ("Boolean.trait", include_str!("../lib/Boolean.trait")),
    ("Integer.trait", include_str!("../lib/Integer.trait")),
    ("String.trait", include_str!("../lib/String.trait")),
    ("Set.trait", include_str!("../lib/Set.trait")),
    ("TotalOrder.trait", include_str!("../lib/TotalOrder.trait")),
    ("MutableObj.trait", include_str!("../lib/MutableObj.trait")),
];

/// Which `%% original[tag]:` markers to apply when loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Originals {
    #[default]
    None,
    All,
    Tags(Vec<String>),
}

impl Originals {
    fn selects(&self, tag: &str) -> bool {
        match self {
            Originals::None => false,
            Originals::All => true,
            Originals::Tags(tags) => tags.iter().any(|t| t == tag),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Library directory; `None` uses `TIERSPEC_LIB` or the built-in library.
    pub lib: Option<PathBuf>,
    pub originals: Originals,
}

/// Replaces the line after each selected `%% original[tag]: text` marker by `text`.
///
/// The marker keeps the original wording of an axiom next to its corrected form.
pub fn restore_originals(src: &str, which: &Originals) -> String {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        out.push(line.to_string());
        if let Some(rest) = line.trim_start().strip_prefix("%% original[") {
            if let Some((tag, text)) = rest.split_once("]:") {
                if which.selects(tag) && i + 1 < lines.len() {
                    out.push(text.to_string());
                    i += 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    let mut s = out.join("\n");
    if src.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Tags of all `%% original[...]` markers in a source text.
pub fn original_tags(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| l.trim_start().strip_prefix("%% original["))
        .filter_map(|r| r.split_once("]:").map(|(t, _)| t.to_string()))
        .collect()
}

#[derive(Clone, Debug)]
pub struct LoadedUnit {
    pub unit: SourceUnit,
    pub path: PathBuf,
    pub from_library: bool,
}

/// All units of one invocation: library traits plus user files.
#[derive(Clone, Debug, Default)]
pub struct Project {
    pub units: Vec<LoadedUnit>,
    /// Non-fatal notes produced while loading (for example replaced units).
    pub notes: Vec<Diagnostic>,
}

fn spec_files(path: &Path) -> Result<Vec<PathBuf>, Diagnostic> {
    let err = |e: std::io::Error| Diagnostic::error(Span::default(), format!("cannot read: {e}")).in_file(path);
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| UnitKind::from_extension(e).is_some())
            })
            .collect();
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Diagnostic::error(Span::default(), "no such file or directory").in_file(path))
    }
}

fn kind_of(path: &Path) -> Option<UnitKind> {
    path.extension().and_then(|e| e.to_str()).and_then(UnitKind::from_extension)
}

impl Project {
    /// Loads the library and then `paths` (files or directories, in order).
    ///
    /// A later unit with the same kind and name replaces an earlier one.
    pub fn load(paths: &[PathBuf], opts: &LoadOptions) -> Result<Project, Vec<Diagnostic>> {
        let mut project = Project::default();
        let mut errors = Vec::new();
        let lib_dir = opts.lib.clone().or_else(|| std::env::var_os(LIB_ENV).map(PathBuf::from));
        match &lib_dir {
            Some(dir) => match spec_files(dir) {
                Ok(files) => {
                    for f in files {
                        project.load_file(&f, true, &Originals::None, &mut errors);
                    }
                }
                Err(d) => errors.push(d),
            },
            None => {
                for (name, text) in BUILTIN_LIBRARY {
                    project.add_text(text, Path::new(&format!("<lib>/{name}")), UnitKind::Trait, true, &mut errors);
                }
            }
        }
        for p in paths {
            match spec_files(p) {
                Ok(files) => {
                    for f in files {
                        project.load_file(&f, false, &opts.originals, &mut errors);
                    }
                }
                Err(d) => errors.push(d),
            }
        }
        if errors.is_empty() {
            Ok(project)
        } else {
            Err(errors)
        }
    }

    fn load_file(&mut self, path: &Path, from_library: bool, originals: &Originals, errors: &mut Vec<Diagnostic>) {
        let Some(kind) = kind_of(path) else {
            errors.push(Diagnostic::error(Span::default(), "unrecognized file extension").in_file(path));
            return;
        };
        match fs::read_to_string(path) {
            Ok(text) => {
                let text = restore_originals(&text, originals);
                self.add_text(&text, path, kind, from_library, errors);
            }
            Err(e) => errors.push(Diagnostic::error(Span::default(), format!("cannot read: {e}")).in_file(path)),
        }
    }

    /// Parses `text` as a unit of `kind` and adds it.
    pub fn add_text(
        &mut self,
        text: &str,
        path: &Path,
        kind: UnitKind,
        from_library: bool,
        errors: &mut Vec<Diagnostic>,
    ) {
        match parse_unit(text, kind) {
            Ok(unit) => self.add(unit, path.to_path_buf(), from_library),
            Err(e) => errors.push(e.to_diagnostic().in_file(path)),
        }
    }

    pub fn add(&mut self, unit: SourceUnit, path: PathBuf, from_library: bool) {
        if let Some(pos) = self
            .units
            .iter()
            .position(|u| u.unit.kind() == unit.kind() && u.unit.name() == unit.name())
        {
            let old = self.units.remove(pos);
            if !old.from_library {
                self.notes.push(
                    Diagnostic::warning(
                        Span::default(),
                        format!("`{}` replaces the unit of the same name in {}", unit.name(), old.path.display()),
                    )
                    .in_file(&path),
                );
            }
        }
        self.units.push(LoadedUnit {
            unit,
            path,
            from_library,
        });
    }

    /// Every trait, library included, by name.
    pub fn traits(&self) -> BTreeMap<String, TraitUnit> {
        self.units
            .iter()
            .filter_map(|u| match &u.unit {
                SourceUnit::Trait(t) => Some((t.name.clone(), t.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn user_traits(&self) -> impl Iterator<Item = (&TraitUnit, &Path)> {
        self.units.iter().filter(|u| !u.from_library).filter_map(|u| match &u.unit {
            SourceUnit::Trait(t) => Some((t, u.path.as_path())),
            _ => None,
        })
    }

    pub fn roles(&self) -> impl Iterator<Item = (&RoleUnit, &Path)> {
        self.units.iter().filter_map(|u| match &u.unit {
            SourceUnit::Role(r) => Some((r, u.path.as_path())),
            _ => None,
        })
    }

    pub fn interactions(&self) -> impl Iterator<Item = (&InteractionUnit, &Path)> {
        self.units.iter().filter_map(|u| match &u.unit {
            SourceUnit::Interaction(i) => Some((i, u.path.as_path())),
            _ => None,
        })
    }

    /// File that defines the unit `name` of `kind`.
    pub fn path_of(&self, kind: UnitKind, name: &str) -> Option<&Path> {
        self.units
            .iter()
            .find(|u| u.unit.kind() == kind && u.unit.name() == name)
            .map(|u| u.path.as_path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "a\n%% original[x]:   b == 1;\n  b == 2;\nc\n";

    #[test]
    fn restores_selected_markers_only() {
        assert_eq!(restore_originals(SRC, &Originals::None), SRC);
        let all = restore_originals(SRC, &Originals::All);
        assert!(all.contains("   b == 1;\nc"));
        assert!(!all.contains("b == 2"));
        assert_eq!(restore_originals(SRC, &Originals::Tags(vec!["y".into()])), SRC);
        assert_eq!(original_tags(SRC), vec!["x".to_string()]);
    }

    #[test]
    fn builtin_library_parses() {
        let p = Project::load(&[], &LoadOptions::default()).unwrap();
        assert_eq!(p.traits().len(), BUILTIN_LIBRARY.len());
    }
}
