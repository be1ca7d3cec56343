/// Pulls the code out of a model reply.
///
/// Fenced blocks win: their bodies are concatenated in order, separated by a
/// blank line, with the language tag dropped. Without fences the reply is cut
/// at the first line that starts a definition or import. Otherwise the input
/// is returned unchanged.
pub fn extract_code(raw: &str) -> String {
    if let Some(blocks) = fenced_blocks(raw) {
        return blocks.join("\n\n");
    }
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let head = line.trim_start();
        if ["def ", "async def ", "class ", "import ", "from "]
            .iter()
            .any(|k| head.starts_with(k))
        {
            return raw[offset..].to_string();
        }
        offset += line.len();
    }
    raw.to_string()
}

fn fenced_blocks(raw: &str) -> Option<Vec<String>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(body) => blocks.push(body.join("\n")),
                None => current = Some(Vec::new()),
            }
            continue;
        }
        if let Some(body) = current.as_mut() {
            body.push(line);
        }
    }
    // An unterminated fence still counts; the reply was probably truncated.
    if let Some(body) = current {
        blocks.push(body.join("\n"));
    }
    (!blocks.is_empty()).then_some(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_single_fence() {
        assert_eq!(
            extract_code("Here is the code:\n```python\ndef f(x):\n return x\n```"),
            "def f(x):\n return x"
        );
    }

    #[test]
    fn bare_code_unchanged() {
        let code = "def f(x):\n    return x\n";
        assert_eq!(extract_code(code), code);
        assert_eq!(extract_code("x = 1"), "x = 1");
    }

    #[test]
    fn two_blocks_fixture() {
        let raw = include_str!("../../tests/fixtures/two_blocks_reply.txt");
        let expected = include_str!("../../tests/fixtures/two_blocks_expected.py");
        assert_eq!(extract_code(raw), expected.trim_end_matches('\n'));
    }

    #[test]
    fn prose_before_definition_is_dropped() {
        assert_eq!(
            extract_code("Sure! This works:\nimport math\ndef area(r):\n    return math.pi * r * r"),
            "import math\ndef area(r):\n    return math.pi * r * r"
        );
    }

    #[test]
    fn unterminated_fence() {
        assert_eq!(extract_code("```\ndef g():\n  return 1"), "def g():\n  return 1");
    }
}
