//! Repository mining: history traversal, line-level deltas and blame.
//!
//! Backed by libgit2. A [`Miner`] is `Sync`: it keeps a small pool of
//! repository handles so deltas and blame can run on several threads, and
//! memoizes blame results per `(commit, path)`.

pub mod builder;
pub mod lines;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use git2::{BlameOptions, DiffFindOptions, DiffOptions, Oid, Repository, Sort};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lines::LineKind;
use lines::{classify_file, split_lines};

use crate::time::Timestamp;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    /// Author identity: the e-mail address when present, else the name.
    pub author: String,
    pub author_time: Timestamp,
    pub commit_time: Timestamp,
    pub message: String,
    pub parents: Vec<String>,
    #[serde(default)]
    pub files: Vec<FileDelta>,
}

impl CommitRecord {
    pub fn is_merge(&self) -> bool {
        self.parents.len() > 1
    }

    pub fn first_parent(&self) -> Option<&str> {
        self.parents.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDelta {
    pub path: String,
    /// Pre-image path when the file was renamed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_path: Option<String>,
    pub lines_added: u32,
    pub lines_deleted: u32,
    pub deleted_line_numbers: BTreeSet<u32>,
    pub added_line_numbers: BTreeSet<u32>,
    /// Kinds of the deleted lines, keyed by pre-image line number.
    pub deleted_kinds: BTreeMap<u32, LineKind>,
    /// Kinds of the added lines, keyed by post-image line number.
    pub added_kinds: BTreeMap<u32, LineKind>,
    #[serde(default)]
    pub binary: bool,
}

impl FileDelta {
    /// Path the deleted lines refer to.
    pub fn pre_image_path(&self) -> &str {
        self.old_path.as_deref().unwrap_or(&self.path)
    }

    pub fn lines_modified(&self) -> u32 {
        self.lines_added + self.lines_deleted
    }
}

#[derive(Debug, Clone)]
pub struct MiningOptions {
    /// Diff merges against the first parent only.
    pub first_parent_diffs: bool,
    /// Similarity percentage for rename detection; `None` disables it.
    pub rename_threshold: Option<u16>,
    /// Restrict blame to first-parent history.
    pub blame_first_parent: bool,
}

impl Default for MiningOptions {
    fn default() -> Self {
        Self {
            first_parent_diffs: true,
            rename_threshold: Some(50),
            blame_first_parent: false,
        }
    }
}

pub struct Miner {
    path: PathBuf,
    options: MiningOptions,
    pool: Mutex<Vec<Repository>>,
    blame_cache: RwLock<HashMap<(Oid, String), Arc<Vec<Oid>>>>,
}

impl std::fmt::Debug for Miner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Miner").field("path", &self.path).finish()
    }
}

impl Miner {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::with_options(path, MiningOptions::default())
    }

    pub fn with_options(path: impl AsRef<Path>, options: MiningOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let repo = Repository::open(&path).map_err(|source| Error::Repository {
            path: path.clone(),
            source,
        })?;
        if repo.is_shallow() {
            return Err(Error::ShallowClone(path));
        }
        Ok(Self {
            path,
            options,
            pool: Mutex::new(vec![repo]),
            blame_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn with_repo<T>(&self, f: impl FnOnce(&Repository) -> Result<T>) -> Result<T> {
        let pooled = self.pool.lock().unwrap().pop();
        let repo = match pooled {
            Some(r) => r,
            None => Repository::open(&self.path).map_err(|source| Error::Repository {
                path: self.path.clone(),
                source,
            })?,
        };
        let out = f(&repo);
        self.pool.lock().unwrap().push(repo);
        out
    }

    /// Every commit reachable from `branch`, ancestors first, with file deltas.
    pub fn scan_history(&self, branch: &str) -> Result<Vec<CommitRecord>> {
        let ids = self.commit_ids(branch)?;
        ids.par_iter()
            .map(|id| {
                let mut record = self.commit_record(id)?;
                record.files = self.compute_file_deltas(&record)?;
                Ok(record)
            })
            .collect()
    }

    /// Topologically ordered (ancestors first) commit ids reachable from `branch`.
    pub fn commit_ids(&self, branch: &str) -> Result<Vec<String>> {
        self.with_repo(|repo| {
            if repo.is_empty()? || repo.references()?.next().is_none() {
                return Ok(Vec::new());
            }
            let tip = resolve_branch(repo, branch)?;
            let mut walk = repo.revwalk()?;
            walk.set_sorting(Sort::TOPOLOGICAL | Sort::REVERSE)?;
            walk.push(tip)?;
            walk.map(|oid| Ok(oid?.to_string())).collect()
        })
    }

    /// Commit metadata without deltas.
    pub fn commit_record(&self, id: &str) -> Result<CommitRecord> {
        self.with_repo(|repo| {
            let commit = find_commit(repo, id)?;
            let author = commit.author();
            let identity = match author.email() {
                Ok(e) if !e.is_empty() => e.to_string(),
                _ => author.name().unwrap_or_default().to_string(),
            };
            Ok(CommitRecord {
                id: commit.id().to_string(),
                author: identity,
                author_time: author.when().seconds(),
                commit_time: commit.time().seconds(),
                message: String::from_utf8_lossy(commit.message_bytes()).into_owned(),
                parents: commit.parent_ids().map(|p| p.to_string()).collect(),
                files: Vec::new(),
            })
        })
    }

    /// Per-file deltas of `commit` against its first parent (the empty tree for roots).
    pub fn compute_file_deltas(&self, commit: &CommitRecord) -> Result<Vec<FileDelta>> {
        self.with_repo(|repo| {
            let c = find_commit(repo, &commit.id)?;
            let new_tree = c.tree()?;
            let old_tree = if c.parent_count() > 0 && (self.options.first_parent_diffs || c.parent_count() == 1) {
                Some(c.parent(0)?.tree()?)
            } else {
                None
            };
            let mut opts = DiffOptions::new();
            opts.context_lines(0).ignore_submodules(true);
            let mut diff = repo.diff_tree_to_tree(old_tree.as_ref(), Some(&new_tree), Some(&mut opts))?;
            if let Some(threshold) = self.options.rename_threshold {
                let mut find = DiffFindOptions::new();
                find.renames(true).rename_threshold(threshold);
                diff.find_similar(Some(&mut find))?;
            }
            let mut deltas = Vec::new();
            for idx in 0..diff.deltas().len() {
                let delta = diff.get_delta(idx).expect("delta index in range");
                if delta.new_file().mode() == git2::FileMode::Commit
                    || delta.old_file().mode() == git2::FileMode::Commit
                {
                    continue;
                }
                let new_path = delta
                    .new_file()
                    .path()
                    .or_else(|| delta.old_file().path())
                    .map(|p| p.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let old_path = delta.old_file().path().map(|p| p.to_string_lossy().into_owned());
                let renamed = matches!(delta.status(), git2::Delta::Renamed);
                let old_blob = blob_bytes(repo, delta.old_file().id())?;
                let new_blob = blob_bytes(repo, delta.new_file().id())?;
                let binary = delta.flags().is_binary()
                    || is_binary(old_blob.as_deref())
                    || is_binary(new_blob.as_deref());
                let mut fd = FileDelta {
                    path: new_path.clone(),
                    old_path: if renamed { old_path.clone() } else { None },
                    lines_added: 0,
                    lines_deleted: 0,
                    deleted_line_numbers: BTreeSet::new(),
                    added_line_numbers: BTreeSet::new(),
                    deleted_kinds: BTreeMap::new(),
                    added_kinds: BTreeMap::new(),
                    binary,
                };
                if binary {
                    deltas.push(fd);
                    continue;
                }
                let patch = git2::Patch::from_diff(&diff, idx)?;
                if let Some(patch) = patch {
                    for h in 0..patch.num_hunks() {
                        for l in 0..patch.num_lines_in_hunk(h)? {
                            let line = patch.line_in_hunk(h, l)?;
                            match line.origin() {
                                '+' => {
                                    if let Some(n) = line.new_lineno() {
                                        fd.added_line_numbers.insert(n);
                                    }
                                }
                                '-' => {
                                    if let Some(n) = line.old_lineno() {
                                        fd.deleted_line_numbers.insert(n);
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                fd.lines_added = fd.added_line_numbers.len() as u32;
                fd.lines_deleted = fd.deleted_line_numbers.len() as u32;
                if !fd.deleted_line_numbers.is_empty() {
                    let text = String::from_utf8_lossy(old_blob.as_deref().unwrap_or_default());
                    let kinds = classify_file(old_path.as_deref().unwrap_or(&new_path), &split_lines(&text));
                    fd.deleted_kinds = pick_kinds(&kinds, &fd.deleted_line_numbers);
                }
                if !fd.added_line_numbers.is_empty() {
                    let text = String::from_utf8_lossy(new_blob.as_deref().unwrap_or_default());
                    let kinds = classify_file(&new_path, &split_lines(&text));
                    fd.added_kinds = pick_kinds(&kinds, &fd.added_line_numbers);
                }
                deltas.push(fd);
            }
            deltas.sort_by(|a, b| a.path.cmp(&b.path));
            Ok(deltas)
        })
    }

    /// Lines of `path` as of `commit`.
    pub fn file_lines(&self, commit: &str, path: &str) -> Result<Vec<String>> {
        self.with_repo(|repo| {
            let c = find_commit(repo, commit)?;
            let entry = c.tree()?.get_path(Path::new(path)).map_err(|_| Error::PathMissing {
                commit: commit.to_string(),
                path: path.to_string(),
            })?;
            let blob = repo.find_blob(entry.id())?;
            let text = String::from_utf8_lossy(blob.content());
            Ok(split_lines(&text).into_iter().map(str::to_string).collect())
        })
    }

    /// Origin commit of each requested line of `path` as of `commit`.
    pub fn blame_lines(
        &self,
        commit: &str,
        path: &str,
        lines: &BTreeSet<u32>,
    ) -> Result<BTreeMap<u32, String>> {
        let origins = self.blame_file(commit, path)?;
        lines
            .iter()
            .map(|&line| {
                let idx = line as usize;
                if idx == 0 || idx > origins.len() {
                    return Err(Error::LineOutOfRange {
                        commit: commit.to_string(),
                        path: path.to_string(),
                        line,
                        len: origins.len(),
                    });
                }
                Ok((line, origins[idx - 1].to_string()))
            })
            .collect()
    }

    fn blame_file(&self, commit: &str, path: &str) -> Result<Arc<Vec<Oid>>> {
        let oid = self.with_repo(|repo| Ok(find_commit(repo, commit)?.id()))?;
        let key = (oid, path.to_string());
        if let Some(hit) = self.blame_cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let origins = self.with_repo(|repo| {
            let c = repo.find_commit(oid)?;
            if c.tree()?.get_path(Path::new(path)).is_err() {
                return Err(Error::PathMissing {
                    commit: commit.to_string(),
                    path: path.to_string(),
                });
            }
            let mut opts = BlameOptions::new();
            opts.newest_commit(oid).first_parent(self.options.blame_first_parent);
            let blame = repo.blame_file(Path::new(path), Some(&mut opts))?;
            let mut origins = Vec::new();
            for hunk in blame.iter() {
                let start = hunk.final_start_line();
                let needed = start + hunk.lines_in_hunk() - 1;
                if origins.len() < needed {
                    origins.resize(needed, Oid::ZERO_SHA1);
                }
                for slot in &mut origins[start - 1..needed] {
                    *slot = hunk.final_commit_id();
                }
            }
            Ok(Arc::new(origins))
        })?;
        self.blame_cache
            .write()
            .unwrap()
            .insert(key, Arc::clone(&origins));
        Ok(origins)
    }

    /// Unified diff of `commit` against its first parent, for display.
    pub fn diff_text(&self, commit: &str) -> Result<String> {
        self.with_repo(|repo| {
            let c = find_commit(repo, commit)?;
            let old_tree = if c.parent_count() > 0 {
                Some(c.parent(0)?.tree()?)
            } else {
                None
            };
            let mut opts = DiffOptions::new();
            opts.context_lines(3).ignore_submodules(true);
            let diff = repo.diff_tree_to_tree(old_tree.as_ref(), Some(&c.tree()?), Some(&mut opts))?;
            let mut out = String::new();
            diff.print(git2::DiffFormat::Patch, |_, _, line| {
                if matches!(line.origin(), '+' | '-' | ' ') {
                    out.push(line.origin());
                }
                out.push_str(&String::from_utf8_lossy(line.content()));
                true
            })?;
            Ok(out)
        })
    }
}

fn resolve_branch(repo: &Repository, branch: &str) -> Result<Oid> {
    if let Ok(b) = repo.find_branch(branch, git2::BranchType::Local) {
        if let Some(oid) = b.get().target() {
            return Ok(oid);
        }
    }
    if let Ok(b) = repo.find_branch(branch, git2::BranchType::Remote) {
        if let Some(oid) = b.get().target() {
            return Ok(oid);
        }
    }
    if branch == "HEAD" {
        if let Ok(head) = repo.head() {
            if let Some(oid) = head.target() {
                return Ok(oid);
            }
        }
    }
    Err(Error::UnknownBranch(branch.to_string()))
}

fn find_commit<'r>(repo: &'r Repository, id: &str) -> Result<git2::Commit<'r>> {
    let obj = repo
        .revparse_single(id)
        .map_err(|_| Error::UnknownCommit(id.to_string()))?;
    obj.peel_to_commit()
        .map_err(|_| Error::UnknownCommit(id.to_string()))
}

fn blob_bytes(repo: &Repository, id: Oid) -> Result<Option<Vec<u8>>> {
    if id.is_zero() {
        return Ok(None);
    }
    match repo.find_blob(id) {
        Ok(b) => Ok(Some(b.content().to_vec())),
        Err(_) => Ok(None),
    }
}

fn is_binary(content: Option<&[u8]>) -> bool {
    content.is_some_and(|c| c.iter().take(8000).any(|&b| b == 0))
}

fn pick_kinds(kinds: &[LineKind], wanted: &BTreeSet<u32>) -> BTreeMap<u32, LineKind> {
    wanted
        .iter()
        .map(|&n| {
            let kind = kinds
                .get(n as usize - 1)
                .copied()
                .unwrap_or(LineKind::Code);
            (n, kind)
        })
        .collect()
}
