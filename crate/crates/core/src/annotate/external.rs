//! Annotator backed by an external process speaking JSON lines.
//!
//! Protocol: on start the process prints one header line
//! `{"name": "...", "version": "..."}`. For each request line `{"text": "..."}`
//! it answers with `{"tokens": [{"text": "...", "pos": "PROPN", "ent": "PERSON"}]}`
//! or `{"error": "..."}`. POS tags outside the universal tag set map to `X`;
//! empty or unknown entity labels map to `NONE`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use super::{pos_id, type_id, Annotator, TokenAnnotation};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Header {
    name: String,
    version: String,
}

#[derive(Deserialize)]
struct WireToken {
    text: String,
    #[serde(default)]
    pos: String,
    #[serde(default)]
    ent: String,
}

#[derive(Deserialize)]
struct Response {
    #[serde(default)]
    tokens: Vec<WireToken>,
    #[serde(default)]
    error: Option<String>,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// One child process per annotator; requests are serialized, so give each
/// worker its own instance.
pub struct ExternalAnnotator {
    name: String,
    version: String,
    process: Mutex<Process>,
}

impl ExternalAnnotator {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let backend_err = |message: String| Error::Annotation { turn: 0, message };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| backend_err(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        stdout
            .read_line(&mut line)
            .map_err(|e| backend_err(format!("{program}: no header: {e}")))?;
        let header: Header = serde_json::from_str(line.trim())
            .map_err(|e| backend_err(format!("{program}: bad header {line:?}: {e}")))?;
        Ok(Self {
            name: header.name,
            version: header.version,
            process: Mutex::new(Process { child, stdin, stdout }),
        })
    }

    fn request(&self, text: &str) -> Result<Vec<WireToken>> {
        let err = |message: String| Error::Annotation { turn: 0, message };
        let mut p = self.process.lock().map_err(|_| err("annotator process lock poisoned".into()))?;
        let req = serde_json::json!({ "text": text }).to_string();
        writeln!(p.stdin, "{req}").and_then(|_| p.stdin.flush()).map_err(|e| err(e.to_string()))?;
        let mut line = String::new();
        let n = p.stdout.read_line(&mut line).map_err(|e| err(e.to_string()))?;
        if n == 0 {
            return Err(err("annotator process closed its output".into()));
        }
        let resp: Response = serde_json::from_str(line.trim()).map_err(|e| err(format!("bad response: {e}")))?;
        match resp.error {
            Some(msg) => Err(err(msg)),
            None => Ok(resp.tokens),
        }
    }
}

impl Drop for ExternalAnnotator {
    fn drop(&mut self) {
        if let Ok(p) = self.process.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl Annotator for ExternalAnnotator {
    fn name(&self) -> &str {
        &self.name
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn shareable(&self) -> bool {
        false
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(self.request(text)?.into_iter().map(|t| t.text).collect())
    }

    fn annotate(&self, text: &str) -> Result<Vec<TokenAnnotation>> {
        let none = type_id("NONE").expect("NONE type");
        let x = pos_id("X").expect("X tag");
        Ok(self
            .request(text)?
            .into_iter()
            .map(|t| TokenAnnotation {
                norm: t.text.to_lowercase(),
                pos: pos_id(&t.pos).unwrap_or(x),
                ner: if t.ent.is_empty() { none } else { type_id(&t.ent).unwrap_or(none) },
                surface: t.text,
            })
            .collect())
    }
}
