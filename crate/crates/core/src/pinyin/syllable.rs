//! Hanyu Pinyin syllables as initial + final + tone.

use std::fmt;
use std::str::FromStr;

use super::PinyinError;

macro_rules! inventory {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn from_text(text: &str) -> Option<Self> {
                match text {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

inventory! {
    /// The 23 Pinyin initials.
    Initial {
        B => "b", C => "c", Ch => "ch", D => "d", F => "f", G => "g", H => "h",
        J => "j", K => "k", L => "l", M => "m", N => "n", P => "p", Q => "q",
        R => "r", S => "s", Sh => "sh", T => "t", W => "w", X => "x", Y => "y",
        Z => "z", Zh => "zh",
    }
}

inventory! {
    /// Final surface forms, compounds included (34 entries).
    Final {
        A => "a", Ai => "ai", An => "an", Ang => "ang", Ao => "ao", E => "e",
        Ei => "ei", En => "en", Eng => "eng", Er => "er", I => "i", Ia => "ia",
        Ian => "ian", Iang => "iang", Iao => "iao", Ie => "ie", In => "in",
        Ing => "ing", Iong => "iong", Iu => "iu", O => "o", Ong => "ong",
        Ou => "ou", U => "u", Ua => "ua", Uai => "uai", Uan => "uan",
        Uang => "uang", Ue => "ue", Ui => "ui", Un => "un", Uo => "uo",
        V => "ü", Ve => "üe",
    }
}

/// Tone 1-4, or 5 for the neutral tone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tone(u8);

impl Tone {
    pub const NEUTRAL: Tone = Tone(5);

    pub fn new(tone: u8) -> Option<Tone> {
        (1..=5).contains(&tone).then_some(Tone(tone))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Tone> {
        (1..=5).map(Tone)
    }
}

/// How `parse_syllable` treats a syllable without a trailing tone digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToneMode {
    /// Missing digit means the neutral tone.
    #[default]
    Lenient,
    /// A tone digit is required.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syllable {
    pub initial: Option<Initial>,
    pub final_: Final,
    pub tone: Tone,
}

impl Syllable {
    pub fn new(initial: Option<Initial>, final_: Final, tone: Tone) -> Self {
        Syllable { initial, final_, tone }
    }

    /// Every syllable the inventories admit: (23 initials + none) x 34 finals x 5 tones.
    pub fn enumerate() -> impl Iterator<Item = Syllable> {
        std::iter::once(None)
            .chain(Initial::ALL.iter().copied().map(Some))
            .flat_map(|initial| {
                Final::ALL
                    .iter()
                    .flat_map(move |&final_| Tone::all().map(move |tone| Syllable::new(initial, final_, tone)))
            })
    }

    /// Same initial and final, tone ignored.
    pub fn same_segments(&self, other: &Syllable) -> bool {
        self.initial == other.initial && self.final_ == other.final_
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(initial) = self.initial {
            f.write_str(initial.as_str())?;
        }
        write!(f, "{}{}", self.final_, self.tone.0)
    }
}

impl FromStr for Syllable {
    type Err = PinyinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_syllable(s, ToneMode::Lenient)
    }
}

/// Render as initial + final + tone digit, e.g. `zhuo1`. The neutral tone prints as `5`.
pub fn format_syllable(s: &Syllable) -> String {
    s.to_string()
}

/// Parse a tone-numbered syllable such as `zhuo1` or `er2`.
///
/// The initial is the longest prefix found in the initial inventory, so
/// `zh`, `ch` and `sh` win over `z`, `c` and `s`. Whatever remains before the
/// tone digit has to be a listed final.
pub fn parse_syllable(text: &str, mode: ToneMode) -> Result<Syllable, PinyinError> {
    if text.is_empty() {
        return Err(PinyinError::EmptySyllable);
    }
    let (body, tone) = match text.chars().last() {
        Some(c) if c.is_ascii_digit() => {
            let digit = c as u8 - b'0';
            let tone = Tone::new(digit).ok_or_else(|| PinyinError::BadToneDigit {
                syllable: text.to_string(),
                digit: c,
            })?;
            (&text[..text.len() - 1], tone)
        }
        _ => match mode {
            ToneMode::Lenient => (text, Tone::NEUTRAL),
            ToneMode::Strict => return Err(PinyinError::MissingTone(text.to_string())),
        },
    };
    if let Some(bad) = body.chars().find(|&c| !(c.is_ascii_lowercase() || c == 'ü')) {
        return Err(PinyinError::InvalidCharacter {
            syllable: text.to_string(),
            found: bad,
        });
    }
    if body.is_empty() {
        return Err(PinyinError::EmptyFinal(text.to_string()));
    }

    let initial = [2usize, 1]
        .into_iter()
        .filter(|&n| body.len() >= n && body.is_char_boundary(n))
        .find_map(|n| Initial::from_text(&body[..n]));
    let rest = &body[initial.map_or(0, |i| i.as_str().len())..];
    if rest.is_empty() {
        return Err(PinyinError::EmptyFinal(text.to_string()));
    }
    let final_ = Final::from_text(rest).ok_or_else(|| PinyinError::RemainderNotAFinal {
        syllable: text.to_string(),
        remainder: rest.to_string(),
    })?;
    Ok(Syllable::new(initial, final_, tone))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syl(text: &str) -> Syllable {
        parse_syllable(text, ToneMode::Lenient).unwrap()
    }

    #[test]
    fn inventory_sizes() {
        assert_eq!(Initial::ALL.len(), 23);
        assert_eq!(Final::ALL.len(), 34);
        assert_eq!(Syllable::enumerate().count(), 24 * 34 * 5);
    }

    #[test]
    fn parses_examples() {
        assert_eq!(syl("zhuo1"), Syllable::new(Some(Initial::Zh), Final::Uo, Tone(1)));
        assert_eq!(syl("ni3"), Syllable::new(Some(Initial::N), Final::I, Tone(3)));
        assert_eq!(syl("er2"), Syllable::new(None, Final::Er, Tone(2)));
        assert_eq!(syl("lüe4"), Syllable::new(Some(Initial::L), Final::Ve, Tone(4)));
        assert_eq!(syl("ju1"), Syllable::new(Some(Initial::J), Final::U, Tone(1)));
    }

    #[test]
    fn two_letter_initials_take_precedence() {
        assert_eq!(syl("shi4").initial, Some(Initial::Sh));
        assert_eq!(syl("si4").initial, Some(Initial::S));
        assert_eq!(syl("chang2").initial, Some(Initial::Ch));
        assert_eq!(syl("chang2").final_, Final::Ang);
    }

    #[test]
    fn missing_tone_is_neutral_when_lenient() {
        assert_eq!(syl("de").tone, Tone::NEUTRAL);
        assert!(matches!(
            parse_syllable("de", ToneMode::Strict),
            Err(PinyinError::MissingTone(_))
        ));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_syllable("zq1", ToneMode::Lenient),
            Err(PinyinError::RemainderNotAFinal { ref remainder, .. }) if remainder == "q"
        ));
        assert!(matches!(
            parse_syllable("zh1", ToneMode::Lenient),
            Err(PinyinError::EmptyFinal(_))
        ));
        assert!(matches!(
            parse_syllable("ma6", ToneMode::Lenient),
            Err(PinyinError::BadToneDigit { digit: '6', .. })
        ));
        assert!(matches!(
            parse_syllable("ma0", ToneMode::Lenient),
            Err(PinyinError::BadToneDigit { digit: '0', .. })
        ));
        assert!(matches!(
            parse_syllable("", ToneMode::Lenient),
            Err(PinyinError::EmptySyllable)
        ));
        assert!(matches!(
            parse_syllable("Ma1", ToneMode::Lenient),
            Err(PinyinError::InvalidCharacter { found: 'M', .. })
        ));
        assert!(parse_syllable("lv4", ToneMode::Lenient).is_err());
    }

    #[test]
    fn formats() {
        assert_eq!(
            format_syllable(&Syllable::new(Some(Initial::Zh), Final::Uo, Tone(1))),
            "zhuo1"
        );
        assert_eq!(format_syllable(&Syllable::new(None, Final::A, Tone::NEUTRAL)), "a5");
        assert_eq!(format_syllable(&syl("nüe4")), "nüe4");
    }
}
