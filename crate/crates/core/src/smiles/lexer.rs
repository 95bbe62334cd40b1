use crate::smiles::SmilesError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Atom,
    BracketAtom,
    Bond,
    BranchOpen,
    BranchClose,
    RingClosure,
    /// Recognised SMILES syntax outside the supported subset (`/`, `\`, `.`, `*`).
    Unsupported,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// Byte offset of the first character.
    pub position: usize,
}

/// Greedy longest-match lexer. `Cl`/`Br` win over `C`/`B`; bracket atoms and
/// `%nn` ring closures are single tokens.
pub fn tokenize(s: &str) -> Result<Vec<Token>, SmilesError> {
    if s.is_empty() {
        return Err(SmilesError::Empty);
    }
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let (kind, len) = match c {
            b'C' if bytes.get(i + 1) == Some(&b'l') => (TokenKind::Atom, 2),
            b'B' if bytes.get(i + 1) == Some(&b'r') => (TokenKind::Atom, 2),
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => (TokenKind::Atom, 1),
            b'b' | b'c' | b'n' | b'o' | b's' | b'p' => (TokenKind::Atom, 1),
            b'[' => match s[i..].find(']') {
                Some(end) => (TokenKind::BracketAtom, end + 1),
                None => return Err(SmilesError::UnterminatedBracket { position: i }),
            },
            b'-' | b'=' | b'#' | b':' => (TokenKind::Bond, 1),
            b'(' => (TokenKind::BranchOpen, 1),
            b')' => (TokenKind::BranchClose, 1),
            b'0'..=b'9' => (TokenKind::RingClosure, 1),
            b'%' => {
                let two = bytes.get(i + 1..i + 3);
                match two {
                    Some(d) if d.iter().all(u8::is_ascii_digit) => (TokenKind::RingClosure, 3),
                    _ => {
                        return Err(SmilesError::Lex {
                            position: i,
                            character: '%',
                        })
                    }
                }
            }
            b'/' | b'\\' | b'.' | b'*' => (TokenKind::Unsupported, 1),
            _ => {
                let character = s[i..].chars().next().unwrap_or('?');
                return Err(SmilesError::Lex {
                    position: i,
                    character,
                });
            }
        };
        tokens.push(Token {
            kind,
            lexeme: s[i..i + len].to_string(),
            position: i,
        });
        i += len;
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benzene_is_one_token_per_char() {
        let t = tokenize("c1ccccc1").unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t[1].kind, TokenKind::RingClosure);
    }

    #[test]
    fn two_letter_halogens_win() {
        let t = tokenize("CCl").unwrap();
        let lex: Vec<_> = t.iter().map(|t| t.lexeme.as_str()).collect();
        assert_eq!(lex, ["C", "Cl"]);
        assert!(t.iter().all(|t| t.kind == TokenKind::Atom));
        let t = tokenize("BrCB").unwrap();
        assert_eq!(
            t.iter().map(|t| t.lexeme.as_str()).collect::<Vec<_>>(),
            ["Br", "C", "B"]
        );
    }

    #[test]
    fn unknown_character_position() {
        assert_eq!(
            tokenize("C$"),
            Err(SmilesError::Lex {
                position: 1,
                character: '$'
            })
        );
    }

    #[test]
    fn bracket_and_percent_tokens() {
        let t = tokenize("[NH4+]C%12CC%12").unwrap();
        assert_eq!(t[0].kind, TokenKind::BracketAtom);
        assert_eq!(t[0].lexeme, "[NH4+]");
        assert_eq!(t[2].lexeme, "%12");
        assert!(matches!(
            tokenize("C[NH"),
            Err(SmilesError::UnterminatedBracket { position: 1 })
        ));
        assert!(tokenize("C%1").is_err());
    }

    #[test]
    fn positions_increase_and_lexemes_concatenate() {
        let s = "CC(=O)Oc1ccccc1C(=O)O";
        let t = tokenize(s).unwrap();
        assert!(t.windows(2).all(|w| w[0].position < w[1].position));
        assert_eq!(t.iter().map(|t| t.lexeme.as_str()).collect::<String>(), s);
    }
}
