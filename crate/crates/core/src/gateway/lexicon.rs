//! Small concept lexicon backing the offline embedder and the simulated
//! provider.

use crate::normalize::normalized_tokens;

pub struct Concept {
    pub label: &'static str,
    /// Normalized single-token members.
    pub words: &'static [&'static str],
    /// Umbrella phrases that name the concept without reusing a member word.
    pub umbrella: &'static [&'static str],
}

pub const CONCEPTS: &[Concept] = &[
    Concept {
        label: "money",
        words: &[
            "cost", "price", "fee", "charge", "expense", "payment", "salary", "wage", "budget", "revenue", "income",
            "spend", "spending", "fare", "tuition", "compensation", "pay", "earning", "toll",
        ],
        umbrella: &["outlay", "money figure", "billing figure"],
    },
    Concept {
        label: "place",
        words: &[
            "city", "town", "region", "county", "state", "country", "province", "district", "location", "hometown",
            "territory", "municipality",
        ],
        umbrella: &["locale", "whereabouts", "geographic spot"],
    },
    Concept {
        label: "score",
        words: &["score", "rating", "grade", "mark", "rank", "ranking", "point", "evaluation", "star"],
        umbrella: &["standing", "assessment result", "merit"],
    },
    Concept {
        label: "quantity",
        words: &["quantity", "volume", "capacity", "stock", "inventory", "unit", "headcount", "tally"],
        umbrella: &["how many", "size figure", "multitude"],
    },
    Concept {
        label: "occupation",
        words: &["job", "occupation", "profession", "role", "position", "career", "trade"],
        umbrella: &["line of work", "vocation", "work type"],
    },
    Concept {
        label: "venue",
        words: &["venue", "stadium", "arena", "hall", "building", "facility", "theater", "theatre", "auditorium"],
        umbrella: &["site", "premises", "event ground"],
    },
    Concept {
        label: "contact",
        words: &["phone", "telephone", "email", "fax", "mobile", "cell"],
        umbrella: &["reach details", "contact channel"],
    },
    Concept {
        label: "duration",
        words: &["duration", "runtime", "length", "span", "period", "tenure"],
        umbrella: &["timespan", "how long"],
    },
    Concept {
        label: "weight",
        words: &["weight", "mass", "tonnage", "heft"],
        umbrella: &["heaviness", "load figure"],
    },
    Concept {
        label: "speed",
        words: &["speed", "velocity", "pace", "mph", "kph"],
        umbrella: &["swiftness", "rapidity"],
    },
];

/// Column names absent from typical schemas, used for unanswerable columns.
pub const FAKE_COLUMNS: &[&str] = &[
    "churn risk score",
    "loyalty tier",
    "carbon footprint",
    "satisfaction index",
    "referral source",
    "preferred language",
    "marketing channel",
    "credit limit",
    "blood type",
    "shoe size",
    "favorite color",
    "social media handle",
    "net promoter score",
    "warranty status",
    "lifetime value",
];

/// Text values absent from typical databases, used for unanswerable values.
pub const FAKE_VALUES: &[&str] = &[
    "Prepaid",
    "Platinum Plus",
    "Quantum",
    "Neon Purple",
    "Ultra Deluxe",
    "Hyperloop",
    "Zeta Class",
    "Moonstone",
];

/// Stand-ins for numeric thresholds that do not exist in the data.
pub const FAKE_THRESHOLDS: &[&str] = &["the premium threshold", "the loyalty cutoff", "the regional quota", "the platinum mark"];

pub fn concept_of_token(token: &str) -> Option<&'static Concept> {
    CONCEPTS.iter().find(|c| c.words.contains(&token))
}

/// Concepts of a phrase: every concept one of its tokens belongs to, plus
/// concepts whose umbrella phrase it is.
pub fn concepts_of(phrase: &str) -> Vec<&'static str> {
    let tokens = normalized_tokens(phrase);
    let joined = tokens.join(" ");
    let mut out: Vec<&'static str> = Vec::new();
    for c in CONCEPTS {
        let member = tokens.iter().any(|t| c.words.contains(&t.as_str()));
        let umbrella = c.umbrella.iter().any(|u| normalized_tokens(u).join(" ") == joined);
        if (member || umbrella) && !out.contains(&c.label) {
            out.push(c.label);
        }
    }
    out
}

pub fn concept(label: &str) -> Option<&'static Concept> {
    CONCEPTS.iter().find(|c| c.label == label)
}
