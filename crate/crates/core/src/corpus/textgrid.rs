//! Praat TextGrid reader and writer.
//!
//! Long and short text forms carry the same sequence of values; the long form
//! just adds `key =` labels and `[n]` item markers. The reader tokenizes both
//! into one value stream (strings, numbers, `<exists>` flags) and ignores the
//! decoration.

use std::fmt::Write as _;
use std::path::Path;

use super::alignment::{utterance_id_from_path, AlignmentTrack, PhoneInterval};
use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextGridForm {
    Long,
    Short,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Str(String),
    Num(f64),
    Flag(bool),
}

fn malformed(msg: impl Into<String>) -> CorpusError {
    CorpusError::MalformedTextGrid(msg.into())
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.trim_start_matches('\u{feff}').chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '!' => {
                // comment to end of line
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            if chars.peek() == Some(&'"') {
                                chars.next();
                                s.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(c) => s.push(c),
                        None => return Err(malformed("unterminated string")),
                    }
                }
                tokens.push(Token::Str(s));
            }
            '[' => {
                for c in chars.by_ref() {
                    if c == ']' {
                        break;
                    }
                }
            }
            '<' => {
                chars.next();
                let mut flag = String::new();
                for c in chars.by_ref() {
                    if c == '>' {
                        break;
                    }
                    flag.push(c);
                }
                match flag.as_str() {
                    "exists" => tokens.push(Token::Flag(true)),
                    "absent" => tokens.push(Token::Flag(false)),
                    other => return Err(malformed(format!("unknown flag <{other}>"))),
                }
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let mut num = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || matches!(c, '-' | '+' | '.') {
                        num.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                let value: f64 = num
                    .parse()
                    .map_err(|_| malformed(format!("unparsable number {num:?}")))?;
                tokens.push(Token::Num(value));
            }
            c if c.is_alphabetic() || c == '_' => {
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '?' {
                        chars.next();
                    } else {
                        break;
                    }
                }
            }
            _ => {
                // '=', ':' and other punctuation between keys and values
                chars.next();
            }
        }
    }
    Ok(tokens)
}

struct Stream {
    tokens: std::vec::IntoIter<Token>,
}

impl Stream {
    fn next(&mut self, what: &str) -> Result<Token> {
        self.tokens
            .next()
            .ok_or_else(|| malformed(format!("unexpected end of file, expected {what}")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        match self.next(what)? {
            Token::Str(s) => Ok(s),
            other => Err(malformed(format!("expected {what}, found {other:?}"))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        match self.next(what)? {
            Token::Num(v) if v.is_finite() => Ok(v),
            other => Err(malformed(format!("expected {what}, found {other:?}"))),
        }
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.number(what)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(malformed(format!(
                "{what} must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    }
}

fn check_range(xmin: f64, xmax: f64, what: &str) -> Result<()> {
    if xmin > xmax {
        return Err(malformed(format!("{what}: xmin {xmin} > xmax {xmax}")));
    }
    Ok(())
}

/// Parse TextGrid text and extract the named interval tier.
pub fn parse_textgrid_str(
    text: &str,
    tier_name: &str,
    utterance_id: &str,
) -> Result<AlignmentTrack> {
    let mut s = Stream {
        tokens: tokenize(text)?.into_iter(),
    };
    let file_type = s.string("file type")?;
    let object_class = s.string("object class")?;
    if file_type != "ooTextFile" || object_class != "TextGrid" {
        return Err(malformed(format!(
            "not a TextGrid text file ({file_type:?}, {object_class:?})"
        )));
    }
    let xmin = s.number("xmin")?;
    let xmax = s.number("xmax")?;
    check_range(xmin, xmax, "TextGrid")?;
    let has_tiers = match s.next("tiers flag")? {
        Token::Flag(b) => b,
        other => return Err(malformed(format!("expected <exists>, found {other:?}"))),
    };
    if !has_tiers {
        return Err(CorpusError::MissingTier(tier_name.to_string()));
    }
    let tiers = s.count("tier count")?;
    for _ in 0..tiers {
        let class = s.string("tier class")?;
        let name = s.string("tier name")?;
        let tier_min = s.number("tier xmin")?;
        let tier_max = s.number("tier xmax")?;
        check_range(tier_min, tier_max, &name)?;
        let n = s.count("item count")?;
        match class.as_str() {
            "IntervalTier" => {
                let mut raw = Vec::with_capacity(n);
                for _ in 0..n {
                    let start = s.number("interval xmin")?;
                    let end = s.number("interval xmax")?;
                    let text = s.string("interval text")?;
                    raw.push(PhoneInterval::new(text, start, end));
                }
                if name == tier_name {
                    return interval_tier_to_track(utterance_id, raw);
                }
            }
            "TextTier" => {
                for _ in 0..n {
                    s.number("point time")?;
                    s.string("point mark")?;
                }
            }
            other => return Err(malformed(format!("unknown tier class {other:?}"))),
        }
    }
    Err(CorpusError::MissingTier(tier_name.to_string()))
}

fn interval_tier_to_track(utterance_id: &str, raw: Vec<PhoneInterval>) -> Result<AlignmentTrack> {
    let mut prev_end = f64::NEG_INFINITY;
    for iv in &raw {
        check_range(iv.start_s, iv.end_s, &format!("interval {:?}", iv.label))?;
        if iv.start_s + super::BOUNDARY_TOLERANCE_S < prev_end {
            return Err(malformed(format!(
                "interval {:?} starts at {} before the previous end {prev_end}",
                iv.label, iv.start_s
            )));
        }
        prev_end = iv.end_s;
    }
    // zero-length placeholders carry no phone
    let raw = raw.into_iter().filter(|iv| iv.end_s > iv.start_s).collect();
    AlignmentTrack::from_raw(utterance_id, raw).map_err(|e| match e {
        CorpusError::NonMonotonicIntervals(msg) => malformed(msg),
        other => other,
    })
}

/// Read a TextGrid file and extract the named interval tier. The utterance id
/// is the file stem.
pub fn parse_textgrid(path: &Path, tier_name: &str) -> Result<AlignmentTrack> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_textgrid_str(&text, tier_name, &utterance_id_from_path(path))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Render a track as a single-tier TextGrid. Gaps between intervals are filled
/// with empty intervals so the tier tiles `[0, xmax]`, where `xmax` is the
/// larger of `total_s` and the track end.
pub fn render_textgrid(
    track: &AlignmentTrack,
    tier_name: &str,
    total_s: f64,
    form: TextGridForm,
) -> String {
    let xmax = total_s.max(track.end_s());
    let mut tiled: Vec<(f64, f64, &str)> = Vec::with_capacity(track.len() * 2 + 1);
    let mut cursor = 0.0;
    for iv in track.intervals() {
        if iv.start_s > cursor {
            tiled.push((cursor, iv.start_s, ""));
        }
        tiled.push((iv.start_s, iv.end_s, &iv.label));
        cursor = iv.end_s;
    }
    if xmax > cursor {
        tiled.push((cursor, xmax, ""));
    }

    let mut out = String::new();
    match form {
        TextGridForm::Long => {
            out.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
            let _ = writeln!(
                out,
                "xmin = 0\nxmax = {xmax}\ntiers? <exists>\nsize = 1\nitem []:"
            );
            let _ = writeln!(out, "    item [1]:\n        class = \"IntervalTier\"");
            let _ = writeln!(out, "        name = {}", quote(tier_name));
            let _ = writeln!(out, "        xmin = 0\n        xmax = {xmax}");
            let _ = writeln!(out, "        intervals: size = {}", tiled.len());
            for (i, (a, b, text)) in tiled.iter().enumerate() {
                let _ = writeln!(out, "        intervals [{}]:", i + 1);
                let _ = writeln!(out, "            xmin = {a}\n            xmax = {b}");
                let _ = writeln!(out, "            text = {}", quote(text));
            }
        }
        TextGridForm::Short => {
            out.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
            let _ = writeln!(
                out,
                "0\n{xmax}\n<exists>\n1\n\"IntervalTier\"\n{}",
                quote(tier_name)
            );
            let _ = writeln!(out, "0\n{xmax}\n{}", tiled.len());
            for (a, b, text) in &tiled {
                let _ = writeln!(out, "{a}\n{b}\n{}", quote(text));
            }
        }
    }
    out
}

/// Write a track as a long-form single-tier TextGrid file.
pub fn write_textgrid(
    path: &Path,
    track: &AlignmentTrack,
    tier_name: &str,
    total_s: f64,
) -> Result<()> {
    let text = render_textgrid(track, tier_name, total_s, TextGridForm::Long);
    std::fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LONG: &str = r#"File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 0.3
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "words"
        xmin = 0
        xmax = 0.3
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 0.3
            text = "purr"
    item [2]:
        class = "IntervalTier"
        name = "phones"
        xmin = 0
        xmax = 0.3
        intervals: size = 3
        intervals [1]:
            xmin = 0
            xmax = 0.08
            text = "P"
        intervals [2]:
            xmin = 0.08
            xmax = 0.2
            text = "ER0"
        intervals [3]:
            xmin = 0.2
            xmax = 0.3
            text = "sil"
"#;

    const SHORT: &str = r#"File type = "ooTextFile"
Object class = "TextGrid"

0
0.3
<exists>
2
"TextTier"
"events"
0
0.3
1
0.1
"burst"
"IntervalTier"
"phones"
0
0.3
3
0
0.08
"P"
0.08
0.2
"ER0"
0.2
0.3
""
"#;

    fn expected() -> Vec<PhoneInterval> {
        vec![
            PhoneInterval::new("P", 0.0, 0.08),
            PhoneInterval::new("ER", 0.08, 0.2),
        ]
    }

    #[test]
    fn long_form() {
        let track = parse_textgrid_str(LONG, "phones", "u").unwrap();
        assert_eq!(track.intervals(), expected().as_slice());
    }

    #[test]
    fn short_form_with_point_tier() {
        let track = parse_textgrid_str(SHORT, "phones", "u").unwrap();
        assert_eq!(track.intervals(), expected().as_slice());
    }

    #[test]
    fn missing_tier() {
        assert!(matches!(
            parse_textgrid_str(LONG, "segments", "u"),
            Err(CorpusError::MissingTier(_))
        ));
    }

    #[test]
    fn empty_tier() {
        let text = LONG.replace("\"purr\"", "\"\"");
        let track = parse_textgrid_str(&text, "words", "u").unwrap();
        assert!(track.is_empty());
    }

    #[test]
    fn inconsistent_bounds_are_malformed() {
        let text = LONG.replace("xmax = 0.08", "xmax = -0.5");
        assert!(matches!(
            parse_textgrid_str(&text, "phones", "u"),
            Err(CorpusError::MalformedTextGrid(_))
        ));
        let text = LONG.replace("xmax = 0.08", "xmax = 0.0x8");
        assert!(matches!(
            parse_textgrid_str(&text, "phones", "u"),
            Err(CorpusError::MalformedTextGrid(_))
        ));
    }

    #[test]
    fn escaped_quotes_in_labels() {
        let text = LONG.replace("\"purr\"", "\"say \"\"hi\"\"\"");
        let track = parse_textgrid_str(&text, "words", "u").unwrap();
        assert_eq!(track.intervals()[0].label, "SAY \"HI\"");
    }

    #[test]
    fn random_round_trip_both_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels = ["P", "B", "AA", "IY", "SH", "ER", "NG", "TH"];
        for form in [TextGridForm::Long, TextGridForm::Short] {
            let mut t = 0.0;
            let mut intervals = Vec::new();
            for _ in 0..50 {
                let start: f64 = if rng.gen_bool(0.3) {
                    t + rng.gen_range(0.001..0.05)
                } else {
                    t
                };
                let end = start + rng.gen_range(0.005..0.25);
                intervals.push(PhoneInterval::new(
                    labels[rng.gen_range(0..labels.len())],
                    start,
                    end,
                ));
                t = end;
            }
            let track = AlignmentTrack::new("r", intervals).unwrap();
            let text = render_textgrid(&track, "phones", t + 0.5, form);
            let back = parse_textgrid_str(&text, "phones", "r").unwrap();
            assert_eq!(back.len(), track.len());
            for (a, b) in back.intervals().iter().zip(track.intervals()) {
                assert_eq!(a.label, b.label);
                assert!((a.start_s - b.start_s).abs() <= 1e-6);
                assert!((a.end_s - b.end_s).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn file_round_trip_uses_stem_as_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spk1_utt3.TextGrid");
        let track = AlignmentTrack::new("x", expected()).unwrap();
        write_textgrid(&path, &track, "phones", 1.0).unwrap();
        let back = parse_textgrid(&path, "phones").unwrap();
        assert_eq!(back.utterance_id(), "spk1_utt3");
        assert_eq!(back.intervals(), track.intervals());
    }
}
