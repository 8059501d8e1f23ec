//! The six prompt constructs. Bodies are kept verbatim; `{name}` marks a
//! placeholder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    /// Signal/message extraction from code.
    PC1,
    /// Event-chain generation or update from code.
    PC2,
    /// Code correction from a safety report.
    PC2b,
    /// Instance model creation or update.
    PC3,
    /// Security constraint generation.
    PC4,
    /// Instance model correction from a constraint report.
    PC4b,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] =
        [TemplateId::PC1, TemplateId::PC2, TemplateId::PC2b, TemplateId::PC3, TemplateId::PC4, TemplateId::PC4b];

    pub fn template(self) -> &'static PromptTemplate {
        &TEMPLATES[self as usize]
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for TemplateId {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| GatewayError::UnknownTemplate(s.to_owned()))
    }
}

#[derive(Debug)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub required_placeholders: &'static [&'static str],
}

static TEMPLATES: [PromptTemplate; 6] = [
    PromptTemplate {
        id: TemplateId::PC1,
        body: "You are extracting list of VSS signals and CAN messages based on given source code {code}.\n\
               For each of the steps signals/messages, extract entry: name, type, value, protocol.",
        required_placeholders: &["code"],
    },
    PromptTemplate {
        id: TemplateId::PC2,
        body: "You are updating PlantUml activity diagram about automotive event chain without comments and \
               without explanations given as {current-event-chain}, based on given source code: {code}., taking \
               into account {relevant messages/signals}.\n\
               For each of event chain steps, the following parameters are considered as notes: input, \
               input_format, output, output_format.",
        required_placeholders: &["current-event-chain", "code", "relevant messages/signals"],
    },
    PromptTemplate {
        id: TemplateId::PC2b,
        body: "Based on code analysis outcome {result}, correct the following code {code} to eliminate the \
               detected functional safety-related issues.",
        required_placeholders: &["result", "code"],
    },
    PromptTemplate {
        id: TemplateId::PC3,
        body: "Update model instance {current system}, with respect to {metamodel}, based on requirements \
               {user input}.",
        required_placeholders: &["current system", "metamodel", "user input"],
    },
    PromptTemplate {
        id: TemplateId::PC4,
        body: "Generate automotive system security constraints with respect to {metamodel}, based on reference \
               specification {security guidelines}.",
        required_placeholders: &["metamodel", "security guidelines"],
    },
    PromptTemplate {
        id: TemplateId::PC4b,
        body: "Update automotive system model with respect to {metamodel}, based on current representation \
               {current system} and analysis outcome {OCL pass/fail list}.",
        required_placeholders: &["metamodel", "current system", "OCL pass/fail list"],
    },
];

impl PromptTemplate {
    /// Substitutes every placeholder in a single pass, so braces inside the
    /// bound values are never re-expanded.
    pub fn render<K: AsRef<str>, V: AsRef<str>>(&self, bindings: &[(K, V)]) -> Result<String, GatewayError> {
        let lookup = |name: &str| {
            bindings.iter().find(|(k, _)| k.as_ref() == name).map(|(_, v)| v.as_ref())
        };
        for name in self.required_placeholders {
            if lookup(name).is_none() {
                return Err(GatewayError::MissingBinding { template: self.id, placeholder: (*name).to_owned() });
            }
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let hit = self
                .required_placeholders
                .iter()
                .find(|name| tail.len() > name.len() + 1 && tail[1..].starts_with(**name) && tail[1 + name.len()..].starts_with('}'));
            match hit {
                Some(name) => {
                    out.push_str(lookup(name).expect("checked above"));
                    rest = &tail[name.len() + 2..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Renders template `id` with `bindings`.
pub fn render_prompt<K: AsRef<str>, V: AsRef<str>>(id: TemplateId, bindings: &[(K, V)]) -> Result<String, GatewayError> {
    id.template().render(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markers(id: TemplateId) -> String {
        let t = id.template();
        let bindings: Vec<(&str, String)> =
            t.required_placeholders.iter().map(|p| (*p, format!("⟨{p}⟩"))).collect();
        t.render(&bindings).unwrap()
    }

    #[test]
    fn golden_prompts_with_visible_markers() {
        assert_eq!(
            markers(TemplateId::PC1),
            "You are extracting list of VSS signals and CAN messages based on given source code ⟨code⟩.\n\
             For each of the steps signals/messages, extract entry: name, type, value, protocol."
        );
        assert_eq!(
            markers(TemplateId::PC2),
            "You are updating PlantUml activity diagram about automotive event chain without comments and without \
             explanations given as ⟨current-event-chain⟩, based on given source code: ⟨code⟩., taking into account \
             ⟨relevant messages/signals⟩.\nFor each of event chain steps, the following parameters are considered \
             as notes: input, input_format, output, output_format."
        );
        assert_eq!(
            markers(TemplateId::PC2b),
            "Based on code analysis outcome ⟨result⟩, correct the following code ⟨code⟩ to eliminate the detected \
             functional safety-related issues."
        );
        assert_eq!(
            markers(TemplateId::PC3),
            "Update model instance ⟨current system⟩, with respect to ⟨metamodel⟩, based on requirements ⟨user input⟩."
        );
        assert_eq!(
            markers(TemplateId::PC4),
            "Generate automotive system security constraints with respect to ⟨metamodel⟩, based on reference \
             specification ⟨security guidelines⟩."
        );
        assert_eq!(
            markers(TemplateId::PC4b),
            "Update automotive system model with respect to ⟨metamodel⟩, based on current representation \
             ⟨current system⟩ and analysis outcome ⟨OCL pass/fail list⟩."
        );
    }

    #[test]
    fn each_placeholder_appears_once() {
        for id in TemplateId::ALL {
            let t = id.template();
            assert_eq!(t.id, id);
            for p in t.required_placeholders {
                assert_eq!(t.body.matches(&format!("{{{p}}}")).count(), 1, "{id} {p}");
            }
            assert_eq!(t.body.matches('{').count(), t.required_placeholders.len(), "{id}");
        }
    }

    #[test]
    fn pc1_contains_code_verbatim() {
        let code = "if x { brake(); } // {code}";
        let p = render_prompt(TemplateId::PC1, &[("code", code)]).unwrap();
        assert!(p.contains("extracting list of VSS signals and CAN messages"));
        assert!(p.contains(code));
        assert!(p.starts_with(&format!("You are extracting list of VSS signals and CAN messages based on given source code {code}.\n")));
    }

    #[test]
    fn pc2_empty_chain_mentions_notes() {
        let p = render_prompt(
            TemplateId::PC2,
            &[("current-event-chain", ""), ("code", "x"), ("relevant messages/signals", "")],
        )
        .unwrap();
        assert!(p.contains("input, input_format, output, output_format"));
    }

    #[test]
    fn missing_binding_and_unknown_id() {
        let err = render_prompt(TemplateId::PC3, &[("current system", "a"), ("user input", "b")]).unwrap_err();
        assert_eq!(err, GatewayError::MissingBinding { template: TemplateId::PC3, placeholder: "metamodel".into() });
        assert_eq!("PC9".parse::<TemplateId>().unwrap_err(), GatewayError::UnknownTemplate("PC9".into()));
        assert_eq!("pc4b".parse::<TemplateId>().unwrap(), TemplateId::PC4b);
    }

    #[test]
    fn render_is_injective_in_bindings() {
        for id in TemplateId::ALL {
            let t = id.template();
            for (i, target) in t.required_placeholders.iter().enumerate() {
                let a: Vec<(&str, String)> = t.required_placeholders.iter().map(|p| (*p, format!("v-{p}"))).collect();
                let mut b = a.clone();
                b[i].1 = format!("w-{target}");
                assert_ne!(t.render(&a).unwrap(), t.render(&b).unwrap());
            }
        }
    }
}
