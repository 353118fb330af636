use std::fmt::Write as _;

use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::model::{Causality, ModelDescription, ModelKind, ScalarVariable, ValueReference, Variability};

const FMI_VERSION: &str = "2.0";

fn attr<'a>(node: Node<'a, '_>, element: &'static str, name: &'static str) -> Result<&'a str> {
    node.attribute(name)
        .ok_or(Error::MissingAttribute { element, attr: name })
}

fn parse_bool(node: Node<'_, '_>, name: &str) -> Result<bool> {
    match node.attribute(name) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(other) => Err(Error::Xml(format!(
            "attribute `{name}`: expected true/false, got `{other}`"
        ))),
    }
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Xml(format!("{what}: `{text}` is not a number")))
}

fn parse_index(text: &str, what: &str) -> Result<usize> {
    text.trim()
        .parse::<usize>()
        .map_err(|_| Error::Xml(format!("{what}: `{text}` is not a non-negative integer")))
}

fn children<'a, 'i>(node: Node<'a, 'i>, tag: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |n| n.has_tag_name(tag))
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(tag))
}

/// 1-based `index` attributes of the `<Unknown>` children of `list`.
fn unknown_indices(list: Option<Node<'_, '_>>, n_vars: usize, section: &str) -> Result<Vec<usize>> {
    let Some(list) = list else {
        return Ok(Vec::new());
    };
    children(list, "Unknown")
        .map(|u| {
            let idx = parse_index(attr(u, "Unknown", "index")?, section)?;
            if idx == 0 || idx > n_vars {
                return Err(Error::InvalidDescription(format!(
                    "{section}: variable index {idx} out of range 1..={n_vars}"
                )));
            }
            Ok(idx - 1)
        })
        .collect()
}

/// Parses an FMI 2.0 `modelDescription.xml` (Real variables, ModelExchange /
/// CoSimulation elements and the ModelStructure derivative/output lists).
pub fn parse_model_description(xml: &[u8]) -> Result<ModelDescription> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::Xml(format!("not UTF-8: {e}")))?;
    let doc = Document::parse(text).map_err(|e| Error::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("fmiModelDescription") {
        return Err(Error::Xml(format!(
            "root element is <{}>, expected <fmiModelDescription>",
            root.tag_name().name()
        )));
    }
    let version = attr(root, "fmiModelDescription", "fmiVersion")?;
    if version != FMI_VERSION {
        return Err(Error::UnsupportedVersion(version.to_string()));
    }
    let model_name = attr(root, "fmiModelDescription", "modelName")?.to_string();
    let guid = attr(root, "fmiModelDescription", "guid")?.to_string();
    let n_event_indicators = match root.attribute("numberOfEventIndicators") {
        Some(n) => parse_index(n, "numberOfEventIndicators")?,
        None => 0,
    };

    let me = child(root, "ModelExchange");
    let cs = child(root, "CoSimulation");
    let kind = match (me.is_some(), cs.is_some()) {
        (true, true) => ModelKind::Both,
        (true, false) => ModelKind::ModelExchange,
        (false, true) => ModelKind::CoSimulation,
        (false, false) => {
            return Err(Error::InvalidDescription(
                "neither <ModelExchange> nor <CoSimulation> present".into(),
            ))
        }
    };
    let mut provides_directional_derivative = false;
    let mut can_get_set_state = false;
    for element in me.iter().chain(cs.iter()) {
        provides_directional_derivative |= parse_bool(*element, "providesDirectionalDerivative")?;
        can_get_set_state |= parse_bool(*element, "canGetAndSetFMUstate")?;
    }

    let mut variables = Vec::new();
    // (derivative variable position, 1-based state index) pairs
    let mut derivative_of = Vec::new();
    if let Some(list) = child(root, "ModelVariables") {
        for sv in children(list, "ScalarVariable") {
            let name = attr(sv, "ScalarVariable", "name")?.to_string();
            let vr_text = attr(sv, "ScalarVariable", "valueReference")?;
            let vr = vr_text
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::Xml(format!("valueReference `{vr_text}` of `{name}` is not a u32")))?;
            let causality = match sv.attribute("causality") {
                None => Causality::Local,
                Some(c) => {
                    Causality::parse(c).ok_or_else(|| Error::Xml(format!("unknown causality `{c}` on `{name}`")))?
                }
            };
            let variability = match sv.attribute("variability") {
                None => Variability::Continuous,
                Some(v) => {
                    Variability::parse(v).ok_or_else(|| Error::Xml(format!("unknown variability `{v}` on `{name}`")))?
                }
            };
            let real =
                child(sv, "Real").ok_or_else(|| Error::Xml(format!("variable `{name}` has no <Real> type element")))?;
            let start = real.attribute("start").map(|s| parse_f64(s, "start")).transpose()?;
            if let Some(d) = real.attribute("derivative") {
                derivative_of.push((variables.len(), parse_index(d, "derivative")?));
            }
            variables.push(ScalarVariable {
                name,
                vr: ValueReference(vr),
                causality,
                variability,
                start,
            });
        }
    }

    let n = variables.len();
    let structure = child(root, "ModelStructure");
    let derivative_pos = unknown_indices(structure.and_then(|s| child(s, "Derivatives")), n, "Derivatives")?;
    let output_pos = unknown_indices(structure.and_then(|s| child(s, "Outputs")), n, "Outputs")?;

    let mut state_vrs = Vec::with_capacity(derivative_pos.len());
    let mut derivative_vrs = Vec::with_capacity(derivative_pos.len());
    for &pos in &derivative_pos {
        let state = derivative_of
            .iter()
            .find(|(d, _)| *d == pos)
            .map(|&(_, s)| s)
            .ok_or_else(|| {
                Error::InvalidDescription(format!(
                    "derivative `{}` lacks a `derivative` attribute",
                    variables[pos].name
                ))
            })?;
        if state == 0 || state > n {
            return Err(Error::InvalidDescription(format!(
                "`{}` is the derivative of variable {state}, out of range 1..={n}",
                variables[pos].name
            )));
        }
        state_vrs.push(variables[state - 1].vr);
        derivative_vrs.push(variables[pos].vr);
    }
    let output_vrs = output_pos.iter().map(|&i| variables[i].vr).collect();
    let input_vrs = variables
        .iter()
        .filter(|v| v.causality == Causality::Input)
        .map(|v| v.vr)
        .collect();

    let desc = ModelDescription {
        model_name,
        guid,
        kind,
        variables,
        state_vrs,
        derivative_vrs,
        input_vrs,
        output_vrs,
        provides_directional_derivative,
        can_get_set_state,
        n_event_indicators,
    };
    desc.validate()?;
    Ok(desc)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// Shortest representation that parses back to the same bits.
fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes `md` as an FMI 2.0 model description. Inputs are implied by
/// causality; `md.input_vrs` is expected to list them in variable order.
pub fn serialize_model_description(md: &ModelDescription) -> Vec<u8> {
    let index = md.index_map();
    let pos = |vr: &ValueReference| index[vr] + 1;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<fmiModelDescription fmiVersion=\"{FMI_VERSION}\" modelName=\"{}\" guid=\"{}\" numberOfEventIndicators=\"{}\">",
        escape(&md.model_name),
        escape(&md.guid),
        md.n_event_indicators
    );
    let caps = format!(
        "providesDirectionalDerivative=\"{}\" canGetAndSetFMUstate=\"{}\"",
        md.provides_directional_derivative, md.can_get_set_state
    );
    let id = escape(&md.model_name);
    if md.kind.supports_me() {
        let _ = writeln!(out, "  <ModelExchange modelIdentifier=\"{id}\" {caps}/>");
    }
    if md.kind.supports_cs() {
        let _ = writeln!(out, "  <CoSimulation modelIdentifier=\"{id}\" {caps}/>");
    }

    let mut state_of = vec![None; md.variables.len()];
    for (s, d) in md.state_vrs.iter().zip(&md.derivative_vrs) {
        state_of[index[d]] = Some(pos(s));
    }
    if md.variables.is_empty() {
        out.push_str("  <ModelVariables/>\n");
    } else {
        out.push_str("  <ModelVariables>\n");
        for (v, state) in md.variables.iter().zip(&state_of) {
            let _ = writeln!(
                out,
                "    <ScalarVariable name=\"{}\" valueReference=\"{}\" causality=\"{}\" variability=\"{}\">",
                escape(&v.name),
                v.vr.0,
                v.causality.as_str(),
                v.variability.as_str()
            );
            out.push_str("      <Real");
            if let Some(s) = v.start {
                let _ = write!(out, " start=\"{}\"", format_f64(s));
            }
            if let Some(k) = state {
                let _ = write!(out, " derivative=\"{k}\"");
            }
            out.push_str("/>\n    </ScalarVariable>\n");
        }
        out.push_str("  </ModelVariables>\n");
    }

    out.push_str("  <ModelStructure>\n");
    for (tag, list) in [("Outputs", &md.output_vrs), ("Derivatives", &md.derivative_vrs)] {
        if list.is_empty() {
            continue;
        }
        let _ = writeln!(out, "    <{tag}>");
        for vr in list {
            let _ = writeln!(out, "      <Unknown index=\"{}\"/>", pos(vr));
        }
        let _ = writeln!(out, "    </{tag}>");
    }
    out.push_str("  </ModelStructure>\n</fmiModelDescription>\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelFactory;
    use crate::models::{make_friction_pendulum, make_frictionless_pendulum, wrap_me_as_cs, PendulumParams};
    use crate::ode::SolverConfig;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<fmiModelDescription fmiVersion="2.0" modelName="Osc" guid="{abc}">
  <ModelExchange modelIdentifier="Osc" providesDirectionalDerivative="true"/>
  <ModelVariables>
    <ScalarVariable name="x" valueReference="0" causality="local" variability="continuous"><Real start="1"/></ScalarVariable>
    <ScalarVariable name="v" valueReference="1" causality="local" variability="continuous"><Real start="0" derivative="1"/></ScalarVariable>
    <ScalarVariable name="a" valueReference="2" causality="output" variability="continuous"><Real derivative="2"/></ScalarVariable>
    <ScalarVariable name="k" valueReference="3" causality="parameter" variability="fixed"><Real start="4"/></ScalarVariable>
  </ModelVariables>
  <ModelStructure>
    <Outputs><Unknown index="3"/></Outputs>
    <Derivatives><Unknown index="2"/><Unknown index="3"/></Derivatives>
    <InitialUnknowns/>
  </ModelStructure>
  <VendorAnnotations><Tool name="x"/></VendorAnnotations>
</fmiModelDescription>"#;

    #[test]
    fn minimal_document() {
        let d = parse_model_description(MINIMAL.as_bytes()).unwrap();
        assert_eq!(d.n_states(), 2);
        assert_eq!(d.state_vrs, vec![ValueReference(0), ValueReference(1)]);
        assert_eq!(d.derivative_vrs, vec![ValueReference(1), ValueReference(2)]);
        assert_eq!(d.output_vrs, vec![ValueReference(2)]);
        assert_eq!(d.kind, ModelKind::ModelExchange);
        assert!(d.provides_directional_derivative);
        assert!(!d.can_get_set_state);
        assert_eq!(d.variables[3].start, Some(4.0));
        assert_eq!(d.variables[2].start, None);
    }

    #[test]
    fn missing_guid_is_named() {
        let xml = MINIMAL.replace(" guid=\"{abc}\"", "");
        match parse_model_description(xml.as_bytes()) {
            Err(Error::MissingAttribute { attr, .. }) => assert_eq!(attr, "guid"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_one_rejected() {
        let xml = MINIMAL.replace("fmiVersion=\"2.0\"", "fmiVersion=\"1.0\"");
        assert!(matches!(
            parse_model_description(xml.as_bytes()),
            Err(Error::UnsupportedVersion(v)) if v == "1.0"
        ));
    }

    #[test]
    fn malformed_and_dangling() {
        assert!(matches!(
            parse_model_description(b"<fmiModelDescription"),
            Err(Error::Xml(_))
        ));
        let xml = MINIMAL.replace("<Unknown index=\"3\"/></Outputs>", "<Unknown index=\"9\"/></Outputs>");
        assert!(matches!(
            parse_model_description(xml.as_bytes()),
            Err(Error::InvalidDescription(_))
        ));
    }

    #[test]
    fn builtin_descriptions_round_trip() {
        let me = make_frictionless_pendulum(&PendulumParams::fmu()).unwrap();
        let fr = make_friction_pendulum(&PendulumParams::reference()).unwrap();
        let cs = wrap_me_as_cs(&me, SolverConfig::default()).unwrap();
        for d in [me.description(), fr.description(), cs.description()] {
            let back = parse_model_description(&serialize_model_description(&d)).unwrap();
            assert_eq!(*d, back);
        }
    }

    #[test]
    fn empty_variable_list_round_trips() {
        let d = ModelDescription {
            model_name: "Empty".into(),
            guid: "{0}".into(),
            kind: ModelKind::Both,
            variables: vec![],
            state_vrs: vec![],
            derivative_vrs: vec![],
            input_vrs: vec![],
            output_vrs: vec![],
            provides_directional_derivative: false,
            can_get_set_state: true,
            n_event_indicators: 0,
        };
        assert_eq!(parse_model_description(&serialize_model_description(&d)).unwrap(), d);
    }

    #[test]
    fn unicode_and_markup_names_round_trip() {
        let mut d = (*make_frictionless_pendulum(&PendulumParams::fmu())
            .unwrap()
            .description())
        .clone();
        d.model_name = "Pendel <Feder & Masse> \"ü\"".into();
        d.variables[3].name = "masse.m_µ_Δ_日本".into();
        d.variables[3].start = Some(1e-300);
        let xml = serialize_model_description(&d);
        let back = parse_model_description(&xml).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.variables[3].name.as_bytes(), d.variables[3].name.as_bytes());
    }
}
