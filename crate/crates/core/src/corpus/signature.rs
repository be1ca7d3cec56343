//! Function-signature hints recovered from assertion statements.
//!
//! The hint is `name(type, type, ...)`, where each argument type is inferred
//! from the literal syntax of the argument in the first call found in the
//! assertion. Builtin wrappers such as `set(...)` or `math.isclose(...)` are
//! looked through when their first argument is itself a call. Anything that
//! does not scan cleanly yields no hint.

/// Callees that commonly wrap the function under test in MBPP assertions.
const WRAPPERS: &[&str] = &[
    "set",
    "frozenset",
    "sorted",
    "list",
    "tuple",
    "dict",
    "str",
    "int",
    "float",
    "bool",
    "abs",
    "round",
    "len",
    "sum",
    "min",
    "max",
    "isinstance",
    "all",
    "any",
    "type",
    "repr",
    "math.isclose",
    "math.floor",
    "math.ceil",
    "math.fabs",
];

const CONSTRUCTORS: &[&str] = &[
    "set",
    "frozenset",
    "list",
    "tuple",
    "dict",
    "str",
    "int",
    "float",
    "bool",
    "bytes",
    "complex",
    "range",
];

pub fn extract_signature(assertion: &str) -> Option<String> {
    let body = strip_assert(assertion.trim())?;
    let call = first_call(body)?;
    describe_call(call, 0)
}

struct Call<'a> {
    name: &'a str,
    args: Vec<&'a str>,
}

fn strip_assert(s: &str) -> Option<&str> {
    let rest = s.strip_prefix("assert")?;
    match rest.chars().next() {
        Some(c) if c.is_whitespace() || c == '(' => Some(rest.trim_start()),
        _ => None,
    }
}

fn describe_call(call: Call<'_>, depth: usize) -> Option<String> {
    if WRAPPERS.contains(&call.name) {
        if depth > 8 {
            return None;
        }
        let inner = call.args.first().and_then(|a| whole_call(a.trim()))?;
        return describe_call(inner, depth + 1);
    }
    let types: Vec<String> = call.args.iter().map(|a| describe_arg(a.trim())).collect();
    Some(format!("{}({})", call.name, types.join(", ")))
}

fn describe_arg(arg: &str) -> String {
    if let Some((name, value)) = split_keyword(arg) {
        return format!("{}={}", name, literal_type(value.trim()));
    }
    literal_type(arg).to_string()
}

/// `name=value` at top level, excluding comparison operators.
fn split_keyword(arg: &str) -> Option<(&str, &str)> {
    let ident_len = arg
        .char_indices()
        .take_while(|&(i, c)| c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit()))
        .count();
    if ident_len == 0 {
        return None;
    }
    let rest = arg[ident_len..].trim_start();
    if rest.starts_with('=') && !rest.starts_with("==") {
        Some((&arg[..ident_len], &rest[1..]))
    } else {
        None
    }
}

fn literal_type(expr: &str) -> &'static str {
    let bytes = expr.as_bytes();
    let Some(&first) = bytes.first() else {
        return "object";
    };
    match first {
        b'(' => match enclosed(expr) {
            Some(inner) => {
                let parts = match split_top_level(inner, b',') {
                    Some(p) => p,
                    None => return "object",
                };
                if inner.trim().is_empty() || parts.len() > 1 {
                    "tuple"
                } else {
                    literal_type(inner.trim())
                }
            }
            None => "object",
        },
        b'[' => match enclosed(expr) {
            Some(_) => "list",
            None => "object",
        },
        b'{' => match enclosed(expr) {
            Some(inner) if inner.trim().is_empty() => "dict",
            Some(inner) => {
                let first_item = split_top_level(inner, b',')
                    .and_then(|p| p.into_iter().next())
                    .unwrap_or("");
                match split_top_level(first_item, b':') {
                    Some(p) if p.len() > 1 => "dict",
                    _ => "set",
                }
            }
            None => "object",
        },
        _ => {
            if let Some(kind) = string_literal_type(expr) {
                return kind;
            }
            if let Some(kind) = number_type(expr) {
                return kind;
            }
            match expr {
                "True" | "False" => return "bool",
                "None" => return "None",
                _ => {}
            }
            if let Some(call) = whole_call(expr) {
                if let Some(c) = CONSTRUCTORS.iter().find(|&&c| c == call.name) {
                    return c;
                }
            }
            "object"
        }
    }
}

fn string_literal_type(expr: &str) -> Option<&'static str> {
    let prefix_len = expr
        .bytes()
        .take_while(|b| matches!(b, b'r' | b'R' | b'b' | b'B' | b'u' | b'U' | b'f' | b'F'))
        .count();
    if prefix_len > 2 {
        return None;
    }
    let rest = &expr.as_bytes()[prefix_len..];
    if !matches!(rest.first(), Some(b'\'') | Some(b'"')) {
        return None;
    }
    // Whole expression must be string literals (implicit concatenation allowed).
    let mut i = prefix_len;
    let b = expr.as_bytes();
    loop {
        i = skip_string(b, i)?;
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i == b.len() {
            break;
        }
        let p = b[i..].iter().take_while(|c| c.is_ascii_alphabetic()).count();
        if p > 2 || !matches!(b.get(i + p), Some(b'\'') | Some(b'"')) {
            return None;
        }
        i += p;
    }
    if expr[..prefix_len].contains(['b', 'B']) {
        Some("bytes")
    } else {
        Some("str")
    }
}

fn number_type(expr: &str) -> Option<&'static str> {
    let body = expr.strip_prefix(['-', '+']).unwrap_or(expr).trim_start();
    let first = body.chars().next()?;
    if !(first.is_ascii_digit() || (first == '.' && body.len() > 1)) {
        return None;
    }
    let is_hex = body.starts_with("0x") || body.starts_with("0X");
    if !body.chars().all(|c| {
        c.is_ascii_hexdigit() || matches!(c, '.' | '_' | 'e' | 'E' | '+' | '-' | 'x' | 'X' | 'o' | 'O' | 'j' | 'J')
    }) {
        return None;
    }
    if body.ends_with(['j', 'J']) {
        Some("complex")
    } else if !is_hex && (body.contains('.') || body.contains(['e', 'E'])) {
        Some("float")
    } else {
        Some("int")
    }
}

/// If `expr` is exactly one bracketed group, returns its interior.
fn enclosed(expr: &str) -> Option<&str> {
    let close = matching_close(expr.as_bytes(), 0)?;
    if close + 1 == expr.len() {
        Some(&expr[1..close])
    } else {
        None
    }
}

/// If `expr` is exactly `name(args)`, parses it.
fn whole_call(expr: &str) -> Option<Call<'_>> {
    let name_len = dotted_name_len(expr.as_bytes(), 0);
    if name_len == 0 {
        return None;
    }
    let open = name_len + leading_ws(&expr.as_bytes()[name_len..]);
    if expr.as_bytes().get(open) != Some(&b'(') {
        return None;
    }
    let close = matching_close(expr.as_bytes(), open)?;
    if close + 1 != expr.len() {
        return None;
    }
    call_from(expr, name_len, open, close)
}

/// Finds the first `name(` outside string literals and parses that call.
fn first_call(s: &str) -> Option<Call<'_>> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == b'\'' || c == b'"' {
            i = skip_string(b, i)?;
            continue;
        }
        if is_ident_start(c) && (i == 0 || !is_ident_char(b[i - 1])) {
            let len = dotted_name_len(b, i);
            let after = i + len;
            let open = after + leading_ws(&b[after..]);
            let name = &s[i..after];
            let keyword = matches!(name, "not" | "and" | "or" | "in" | "is" | "lambda" | "if" | "else");
            // String prefixes like r'..' are literals, not names.
            if matches!(b.get(after), Some(b'\'') | Some(b'"')) && len <= 2 {
                i = skip_string(b, after)?;
                continue;
            }
            if !keyword && b.get(open) == Some(&b'(') {
                let close = matching_close(b, open)?;
                return call_from(s, after, open, close).map(|mut call| {
                    call.name = name;
                    call
                });
            }
            i = after;
            continue;
        }
        i += 1;
    }
    None
}

fn call_from(s: &str, name_end: usize, open: usize, close: usize) -> Option<Call<'_>> {
    let name = s[..name_end]
        .rsplit(|c: char| !(is_ident_char(c as u8) || c == '.'))
        .next()?;
    let inner = &s[open + 1..close];
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        let mut parts = split_top_level(inner, b',')?;
        // Trailing comma.
        if parts.last().is_some_and(|p| p.trim().is_empty()) {
            parts.pop();
        }
        if parts.iter().any(|p| p.trim().is_empty()) {
            return None;
        }
        parts
    };
    Some(Call { name, args })
}

fn is_ident_start(c: u8) -> bool {
    c == b'_' || c.is_ascii_alphabetic()
}

fn is_ident_char(c: u8) -> bool {
    c == b'_' || c.is_ascii_alphanumeric()
}

fn leading_ws(b: &[u8]) -> usize {
    b.iter().take_while(|c| **c == b' ' || **c == b'\t').count()
}

fn dotted_name_len(b: &[u8], start: usize) -> usize {
    let mut i = start;
    if i >= b.len() || !is_ident_start(b[i]) {
        return 0;
    }
    while i < b.len() {
        let dotted = b[i] == b'.' && b.get(i + 1).is_some_and(|&c| is_ident_start(c));
        if !(is_ident_char(b[i]) || dotted) {
            break;
        }
        i += 1;
    }
    i - start
}

/// Returns the index just past the string literal starting at `start`.
fn skip_string(b: &[u8], start: usize) -> Option<usize> {
    let quote = b[start];
    let triple = b.len() >= start + 3 && b[start + 1] == quote && b[start + 2] == quote;
    let mut i = start + if triple { 3 } else { 1 };
    while i < b.len() {
        match b[i] {
            b'\\' => i += 2,
            c if c == quote => {
                if !triple {
                    return Some(i + 1);
                }
                if b.len() >= i + 3 && b[i + 1] == quote && b[i + 2] == quote {
                    return Some(i + 3);
                }
                i += 1;
            }
            b'\n' if !triple => return None,
            _ => i += 1,
        }
    }
    None
}

fn matching_close(b: &[u8], open: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut i = open;
    while i < b.len() {
        match b[i] {
            b'\'' | b'"' => {
                i = skip_string(b, i)?;
                continue;
            }
            c @ (b'(' | b'[' | b'{') => stack.push(c),
            c @ (b')' | b']' | b'}') => {
                let want = match c {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                if stack.pop()? != want {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Splits on `sep` occurring outside brackets and string literals.
fn split_top_level(s: &str, sep: u8) -> Option<Vec<&str>> {
    let b = s.as_bytes();
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\'' | b'"' => {
                i = skip_string(b, i)?;
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    if depth != 0 {
        return None;
    }
    parts.push(&s[start..]);
    Some(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mbpp_row_two_shapes() {
        assert_eq!(
            extract_signature("assert similar_elements((3,4,5,6),(5,7,4,10)) == (4,5)").as_deref(),
            Some("similar_elements(tuple, tuple)")
        );
        // The raw dataset row wraps both sides in set(...).
        assert_eq!(
            extract_signature("assert set(similar_elements((3, 4, 5, 6),(5, 7, 4, 10))) == set((4, 5))").as_deref(),
            Some("similar_elements(tuple, tuple)")
        );
    }

    #[test]
    fn literal_kinds() {
        let cases = [
            (
                "assert min_cost([[1, 2, 3], [4, 8, 2], [1, 5, 3]], 2, 2) == 8",
                "min_cost(list, int, int)",
            ),
            ("assert is_not_prime(2) == False", "is_not_prime(int)"),
            ("assert remove_Occ(\"hello\",\"l\") == \"heo\"", "remove_Occ(str, str)"),
            ("assert f({'a': 1}, {1, 2}, {}) == 3", "f(dict, set, dict)"),
            (
                "assert f(-1.5, 2e3, 0x1F, None, True) == 0",
                "f(float, float, int, None, bool)",
            ),
            ("assert f((5), (5,), ()) == 1", "f(int, tuple, tuple)"),
            ("assert f(x=3, y='a') == 1", "f(x=int, y=str)"),
            ("assert f(b'ab', r'\\d') == 1", "f(bytes, str)"),
            ("assert f(set([1]), g) == 1", "f(set, object)"),
            ("assert math.isclose(area(5), 78.5, rel_tol=0.001)", "area(int)"),
            ("assert f() == 1", "f()"),
            ("assert not is_even(3)", "is_even(int)"),
            ("assert(f(1)==2)", "f(int)"),
        ];
        for (input, want) in cases {
            assert_eq!(extract_signature(input).as_deref(), Some(want), "{input}");
        }
    }

    #[test]
    fn failures_store_no_hint() {
        for bad in [
            "assert x == 1",
            "print(f(1))",
            "assert f((1, 2) == 3",
            "assert set(x) == {1}",
            "",
        ] {
            assert_eq!(extract_signature(bad), None, "{bad}");
        }
    }

    #[test]
    fn strings_containing_brackets() {
        assert_eq!(
            extract_signature("assert check(\"(a))\", 'x,y') == 'ok(')").as_deref(),
            Some("check(str, str)")
        );
    }
}
