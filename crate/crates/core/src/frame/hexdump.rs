//! One frame per line as contiguous lowercase hex. Blank lines and lines
//! starting with `#` are skipped on input.

use std::io::{self, Write};

use super::{Frame, FrameError};

pub fn to_hex_line(frame: &Frame) -> String {
    hex::encode(frame.to_bytes())
}

pub fn write_hex_lines<'a, W, I>(w: &mut W, frames: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    for f in frames {
        writeln!(w, "{}", to_hex_line(f))?;
    }
    Ok(())
}

pub fn parse_hex_lines(text: &str) -> Result<Vec<Frame>, FrameError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let compact: String = line.chars().filter(|c| !c.is_whitespace()).collect();
        let bytes = hex::decode(&compact).map_err(|e| FrameError::HexLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let frame = Frame::parse(&bytes).map_err(|e| FrameError::HexLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(frame);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ArpMessage, MacAddr};
    use std::net::Ipv4Addr;

    #[test]
    fn lines_roundtrip_with_comments() {
        let f = Frame::new_arp(
            MacAddr::BROADCAST,
            MacAddr::new(2, 0, 0, 0, 0, 1),
            ArpMessage::request(MacAddr::new(2, 0, 0, 0, 0, 1), Ipv4Addr::new(192, 168, 1, 1), Ipv4Addr::new(192, 168, 1, 100)),
        );
        let mut buf = b"# capture\n\n".to_vec();
        write_hex_lines(&mut buf, [&f, &f]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(parse_hex_lines(&text).unwrap(), vec![f.clone(), f]);
    }

    #[test]
    fn bad_line_is_reported_with_number() {
        let err = parse_hex_lines("# x\nzz\n").unwrap_err();
        assert!(matches!(err, FrameError::HexLine { line: 2, .. }));
        let err = parse_hex_lines("00112233\n").unwrap_err();
        assert!(matches!(err, FrameError::HexLine { line: 1, .. }));
    }
}
