//! Adapter for external encoder/decoder pairs driven by command templates.
//!
//! A template file has one `key: value` per line:
//!
//! ```text
//! encode: my_vtm_wrapper.sh {input} {qpmap} {qp_base} {output}
//! decode: DecoderApp -b {output} -o {recon}
//! bitstream_ext: vvc
//! ```
//!
//! Command lines are split with POSIX shell quoting rules, then the
//! placeholders `{input}`, `{output}`, `{qpmap}`, `{qp_base}` and `{recon}`
//! are substituted per argument. No shell is involved, so wrapper scripts do
//! any encoder-specific translation of the QP map sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::{read_pgm, write_pgm, EncodeResult, Image};
use crate::error::{Error, Result};
use crate::qpmap::{write_qpmap, QpMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTemplate {
    pub encode: String,
    pub decode: String,
    pub bitstream_ext: String,
}

impl CommandTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        let mut encode = None;
        let mut decode = None;
        let mut ext = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| {
                Error::parse(format!("template line {}", n + 1), "expected `key: value`")
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "encode" => encode = Some(value),
                "decode" => decode = Some(value),
                "bitstream_ext" => ext = Some(value),
                other => {
                    return Err(Error::parse(
                        format!("template line {}", n + 1),
                        format!("unknown key {other:?}"),
                    ))
                }
            }
        }
        let template = CommandTemplate {
            encode: encode.ok_or_else(|| Error::parse("template", "missing `encode:` line"))?,
            decode: decode.ok_or_else(|| Error::parse("template", "missing `decode:` line"))?,
            bitstream_ext: ext.unwrap_or_else(|| "bin".to_string()),
        };
        // fail early on unbalanced quotes
        template.argv(&template.encode, &Placeholders::default())?;
        template.argv(&template.decode, &Placeholders::default())?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Text that identifies this template in cache keys.
    pub fn fingerprint(&self) -> String {
        format!("encode={}\ndecode={}\next={}", self.encode, self.decode, self.bitstream_ext)
    }

    fn argv(&self, cmdline: &str, ph: &Placeholders) -> Result<Vec<String>> {
        let words = shell_words::split(cmdline)
            .map_err(|e| Error::parse(format!("template command {cmdline:?}"), e))?;
        if words.is_empty() {
            return Err(Error::parse("template", "empty command"));
        }
        Ok(words.iter().map(|w| ph.substitute(w)).collect())
    }
}

#[derive(Default)]
struct Placeholders {
    input: String,
    output: String,
    qpmap: String,
    qp_base: String,
    recon: String,
}

impl Placeholders {
    fn substitute(&self, word: &str) -> String {
        word.replace("{input}", &self.input)
            .replace("{output}", &self.output)
            .replace("{qpmap}", &self.qpmap)
            .replace("{qp_base}", &self.qp_base)
            .replace("{recon}", &self.recon)
    }
}

fn run(argv: &[String], workdir: &Path) -> Result<()> {
    let command = argv.join(" ");
    let output = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(workdir)
        .output()
        .map_err(|e| Error::ExternalTool {
            command: command.clone(),
            status: "spawn failed".into(),
            stderr: e.to_string(),
        })?;
    if !output.status.success() {
        return Err(Error::ExternalTool {
            command,
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim_end().to_string(),
        });
    }
    Ok(())
}

/// Writes the image and QP map into `workdir`, runs encode then decode, and
/// reads back the reconstruction. Rate is the bitstream size in bits.
pub fn external_encode(
    img: &Image,
    map: &QpMap,
    template: &CommandTemplate,
    workdir: &Path,
) -> Result<EncodeResult> {
    fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let workdir = workdir.canonicalize().map_err(|e| Error::io(workdir, e))?;
    let input = workdir.join("input.pgm");
    let qpmap: PathBuf = workdir.join("qpmap.txt");
    let output = workdir.join(format!("bitstream.{}", template.bitstream_ext));
    let recon = workdir.join("recon.pgm");
    for stale in [&output, &recon] {
        if stale.exists() {
            fs::remove_file(stale).map_err(|e| Error::io(stale, e))?;
        }
    }
    write_pgm(img, &input)?;
    write_qpmap(map, &qpmap)?;

    let ph = Placeholders {
        input: input.display().to_string(),
        output: output.display().to_string(),
        qpmap: qpmap.display().to_string(),
        qp_base: map.base_qp().to_string(),
        recon: recon.display().to_string(),
    };
    let encode_argv = template.argv(&template.encode, &ph)?;
    run(&encode_argv, &workdir)?;
    let size = fs::metadata(&output)
        .map_err(|_| Error::Protocol(format!("encoder produced no bitstream at {}", output.display())))?
        .len();

    run(&template.argv(&template.decode, &ph)?, &workdir)?;
    if !recon.exists() {
        return Err(Error::Protocol(format!(
            "decoder produced no reconstruction at {}",
            recon.display()
        )));
    }
    let decoded = read_pgm(&recon)?;
    if (decoded.width(), decoded.height()) != (img.width(), img.height()) {
        return Err(Error::Dimension(format!(
            "reconstruction is {}x{}, input is {}x{}",
            decoded.width(),
            decoded.height(),
            img.width(),
            img.height()
        )));
    }
    Ok(EncodeResult {
        decoded,
        bits: size as f64 * 8.0,
        encoder_id: format!("template:{}", encode_argv[0]),
        qpmap_path: Some(qpmap),
    })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::geometry::CtuGrid;
    use std::os::unix::fs::PermissionsExt;
    use tempfile::TempDir;

    fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    fn setup() -> (TempDir, Image, QpMap) {
        let dir = TempDir::new().unwrap();
        let img = Image::gray(8, 4, (0..32).map(|i| i * 7).collect()).unwrap();
        let map = QpMap::constant("x", CtuGrid::new(8, 4, 4).unwrap(), 22).unwrap();
        (dir, img, map)
    }

    #[test]
    fn template_parsing() {
        let t = CommandTemplate::parse("# vtm\nencode: enc {input} {output}\ndecode: dec '{output}' {recon}\n").unwrap();
        assert_eq!(t.bitstream_ext, "bin");
        assert!(CommandTemplate::parse("encode: a\n").is_err());
        assert!(CommandTemplate::parse("encode: a\ndecode: b\nfoo: c\n").is_err());
        assert!(CommandTemplate::parse("encode: a 'b\ndecode: b\n").is_err());
    }

    #[test]
    fn copy_through_tool() {
        let (dir, img, map) = setup();
        let enc = script(dir.path(), "enc.sh", "cp \"$1\" \"$2\"; test \"$3\" = 22 && test -s \"$4\"");
        let dec = script(dir.path(), "dec.sh", "cp \"$1\" \"$2\"");
        let t = CommandTemplate::parse(&format!(
            "encode: {} {{input}} {{output}} {{qp_base}} {{qpmap}}\ndecode: {} {{output}} {{recon}}\nbitstream_ext: raw",
            enc.display(),
            dec.display()
        ))
        .unwrap();
        let work = dir.path().join("job");
        let out = external_encode(&img, &map, &t, &work).unwrap();
        assert_eq!(out.decoded, img);
        assert_eq!(out.bits, img.to_pgm().len() as f64 * 8.0);
        assert!(work.join("bitstream.raw").exists());
        let again = external_encode(&img, &map, &t, &work).unwrap();
        assert_eq!(again.bits, out.bits);
        assert!(out.encoder_id.starts_with("template:"));
    }

    #[test]
    fn missing_binary_is_external_error() {
        let (dir, img, map) = setup();
        let t = CommandTemplate::parse("encode: /nonexistent/encoder {input}\ndecode: true\n").unwrap();
        let err = external_encode(&img, &map, &t, dir.path()).unwrap_err();
        assert!(matches!(err, Error::ExternalTool { .. }));
        assert!(err.is_external());
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let (dir, img, map) = setup();
        let enc = script(dir.path(), "enc.sh", "echo boom >&2; exit 4");
        let t = CommandTemplate::parse(&format!("encode: {}\ndecode: true\n", enc.display())).unwrap();
        match external_encode(&img, &map, &t, dir.path()) {
            Err(Error::ExternalTool { stderr, .. }) => assert_eq!(stderr, "boom"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_outputs_are_protocol_errors() {
        let (dir, img, map) = setup();
        let t = CommandTemplate::parse("encode: true\ndecode: true\n").unwrap();
        assert!(matches!(
            external_encode(&img, &map, &t, dir.path()),
            Err(Error::Protocol(_))
        ));
        let enc = script(dir.path(), "enc.sh", "cp \"$1\" \"$2\"");
        let t = CommandTemplate::parse(&format!("encode: {} {{input}} {{output}}\ndecode: true\n", enc.display())).unwrap();
        assert!(matches!(
            external_encode(&img, &map, &t, dir.path()),
            Err(Error::Protocol(_))
        ));
    }
}
