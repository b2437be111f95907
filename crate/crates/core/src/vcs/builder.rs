//! Programmatic construction of small repositories with controlled authors
//! and timestamps. Used by the test suites and handy for reproducible demos.

use std::path::Path;

use git2::{IndexEntry, IndexTime, Oid, Repository, Signature, Time};

use crate::time::Timestamp;
use crate::Result;

pub struct RepoBuilder {
    repo: Repository,
}

/// One file operation in a fixture commit: `Some(content)` writes, `None` deletes.
pub type FileChange<'a> = (&'a str, Option<&'a str>);

impl RepoBuilder {
    /// Initializes a non-bare repository whose HEAD points at `refs/heads/main`.
    pub fn init(path: impl AsRef<Path>) -> Result<Self> {
        let repo = Repository::init(path)?;
        repo.set_head("refs/heads/main")?;
        Ok(Self { repo })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    /// Commits `changes` on top of `branch` (created if missing).
    pub fn commit(
        &mut self,
        branch: &str,
        author: &str,
        time: Timestamp,
        message: &str,
        changes: &[FileChange<'_>],
    ) -> Result<String> {
        let refname = format!("refs/heads/{branch}");
        let parent = self
            .repo
            .find_reference(&refname)
            .ok()
            .and_then(|r| r.target());
        let parents: Vec<Oid> = parent.into_iter().collect();
        self.commit_with_parents(&refname, &parents, author, time, message, changes)
    }

    /// Creates a merge commit on `branch` whose second parent is `other`.
    /// The merged tree is the first parent's tree with `changes` applied.
    pub fn merge(
        &mut self,
        branch: &str,
        other: &str,
        author: &str,
        time: Timestamp,
        message: &str,
        changes: &[FileChange<'_>],
    ) -> Result<String> {
        let refname = format!("refs/heads/{branch}");
        let first = self.repo.find_reference(&refname)?.target().expect("direct ref");
        let second = Oid::from_str(other)?;
        self.commit_with_parents(&refname, &[first, second], author, time, message, changes)
    }

    /// Points `branch` at `commit`.
    pub fn branch_at(&mut self, branch: &str, commit: &str) -> Result<()> {
        let c = self.repo.find_commit(Oid::from_str(commit)?)?;
        self.repo.branch(branch, &c, true)?;
        Ok(())
    }

    fn commit_with_parents(
        &mut self,
        refname: &str,
        parents: &[Oid],
        author: &str,
        time: Timestamp,
        message: &str,
        changes: &[FileChange<'_>],
    ) -> Result<String> {
        let mut index = git2::Index::new()?;
        if let Some(first) = parents.first() {
            index.read_tree(&self.repo.find_commit(*first)?.tree()?)?;
        }
        for (path, content) in changes {
            match content {
                Some(text) => {
                    let blob = self.repo.blob(text.as_bytes())?;
                    let entry = IndexEntry {
                        ctime: IndexTime::new(0, 0),
                        mtime: IndexTime::new(0, 0),
                        dev: 0,
                        ino: 0,
                        mode: 0o100644,
                        uid: 0,
                        gid: 0,
                        file_size: text.len() as u32,
                        id: blob,
                        flags: 0,
                        flags_extended: 0,
                        path: path.as_bytes().to_vec(),
                    };
                    index.add(&entry)?;
                }
                None => index.remove_path(Path::new(path))?,
            }
        }
        let tree_id = index.write_tree_to(&self.repo)?;
        let tree = self.repo.find_tree(tree_id)?;
        let name = author.split('@').next().unwrap_or(author);
        let sig = Signature::new(name, author, &Time::new(time, 0))?;
        let parent_commits = parents
            .iter()
            .map(|p| self.repo.find_commit(*p))
            .collect::<Result<Vec<_>, _>>()?;
        let parent_refs: Vec<&git2::Commit<'_>> = parent_commits.iter().collect();
        let oid = self
            .repo
            .commit(Some(refname), &sig, &sig, message, &tree, &parent_refs)?;
        Ok(oid.to_string())
    }
}
