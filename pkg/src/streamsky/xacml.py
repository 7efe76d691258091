"""XACML-subset policy store and decision point.

The cloud uses this as a pre-filter: a ciphertext's request (its key k and
stream id) is matched against the stream's policies so that transforms run
only for users whose policy accepts k. Enforcement itself is cryptographic.

Supported subset
----------------
Policy::

    <Policy PolicyId=".." RuleCombiningAlgId="...:first-applicable">
      <Description>..</Description>                       (optional)
      <Target><Resources><Resource>
        <ResourceMatch MatchId="...:function:string-equal">
          <AttributeValue DataType="...#string">STREAM</AttributeValue>
          <ResourceAttributeDesignator AttributeId="...:resource:resource-id" DataType="...#string"/>
        </ResourceMatch>
      </Resource></Resources></Target>
      <VariableDefinition VariableId="window-size">       (window policies only)
        <AttributeValue DataType="...#integer">BETA</AttributeValue>
      </VariableDefinition>
      <Rule RuleId=".." Effect="Permit"><Condition>
        <Apply FunctionId="...:function:integer-greater-than-or-equal">
          <Apply FunctionId="...:function:integer-one-and-only">
            <SubjectAttributeDesignator AttributeId="urn:streamsky:1.0:subject:key" DataType="...#integer"/>
          </Apply>
          <AttributeValue DataType="...#integer">THRESHOLD</AttributeValue>
        </Apply>
      </Condition></Rule>
    </Policy>

Comparison functions: integer-equal, integer-greater-than-or-equal,
integer-greater-than, integer-less-than-or-equal, integer-less-than. A
window policy must use greater-than-or-equal (its threshold is alpha).

Request::

    <Request>
      <Subject><Attribute AttributeId="urn:streamsky:1.0:subject:key" DataType="...#integer">
        <AttributeValue>K</AttributeValue></Attribute></Subject>
      <Resource><Attribute AttributeId="...:resource:resource-id" DataType="...#string">
        <AttributeValue>STREAM</AttributeValue></Attribute></Resource>
      <Action/>
    </Request>

A default ``xmlns`` attribute is accepted and ignored; DOCTYPE and entity
declarations are rejected.
"""

import threading
from dataclasses import dataclass
from enum import Enum
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from .errors import StoreError, XacmlError
from .policies import U64_MAX, TriggerPolicy, WindowPolicy, _compare

FN = "urn:oasis:names:tc:xacml:1.0:function:"
XS_STRING = "http://www.w3.org/2001/XMLSchema#string"
XS_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"
RESOURCE_ID = "urn:oasis:names:tc:xacml:1.0:resource:resource-id"
SUBJECT_KEY = "urn:streamsky:1.0:subject:key"
FIRST_APPLICABLE = "urn:oasis:names:tc:xacml:1.0:rule-combining-algorithm:first-applicable"
POLICY_NS = "urn:oasis:names:tc:xacml:2.0:policy:schema:os"
CONTEXT_NS = "urn:oasis:names:tc:xacml:2.0:context:schema:os"
WINDOW_VAR = "window-size"

OP_FUNCTIONS = {
    "eq": FN + "integer-equal",
    "ge": FN + "integer-greater-than-or-equal",
    "gt": FN + "integer-greater-than",
    "le": FN + "integer-less-than-or-equal",
    "lt": FN + "integer-less-than",
}
FUNCTION_OPS = {v: k for k, v in OP_FUNCTIONS.items()}


class Verdict(Enum):
    PERMIT = "Permit"
    DENY = "Deny"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class XacmlPolicy:
    """One stream policy: Permit when ``k op threshold``.

    ``window_size`` is set exactly for sliding-window policies.
    """

    policy_id: str
    stream: str
    op: str
    threshold: int
    window_size: int = None
    description: str = ""

    def __post_init__(self):
        if not self.policy_id:
            raise XacmlError("empty PolicyId")
        # both end up in XML attributes/text that the parser normalizes
        for name, value in (("PolicyId", self.policy_id), ("stream id", self.stream)):
            if not value.isprintable() or value != value.strip():
                raise XacmlError(f"{name} {value!r} has control characters or surrounding spaces")
        if self.description != self.description.strip() or any(
            not (c.isprintable() or c in " \n") for c in self.description
        ):
            raise XacmlError("description has control characters or surrounding spaces")
        if self.op not in OP_FUNCTIONS:
            raise XacmlError(f"unsupported comparison {self.op!r}")
        if not (0 <= self.threshold <= U64_MAX):
            raise XacmlError(f"threshold {self.threshold} outside u64")
        if self.window_size is not None:
            if self.op != "ge":
                raise XacmlError("window policies must use integer-greater-than-or-equal")
            if not (1 <= self.window_size <= 0xFFFFFFFF):
                raise XacmlError(f"bad window size {self.window_size}")

    @classmethod
    def for_policy(cls, policy_id, stream, policy, description=""):
        if isinstance(policy, WindowPolicy):
            return cls(policy_id, stream, "ge", policy.alpha, policy.beta, description)
        return cls(policy_id, stream, policy.op, policy.theta, None, description)

    @property
    def kind(self):
        return "window" if self.window_size is not None else "trigger"

    @property
    def descriptor(self):
        if self.window_size is not None:
            return WindowPolicy(self.threshold, self.window_size)
        return TriggerPolicy(self.threshold, self.op)

    def holds(self, k):
        return _compare(k, self.op, self.threshold)


@dataclass(frozen=True)
class XacmlRequest:
    stream: str
    k: int


@dataclass(frozen=True)
class Decision:
    policy_id: str
    verdict: Verdict
    users: tuple = ()


# -- XML plumbing -------------------------------------------------------------

class _Node:
    __slots__ = ("tag", "attrs", "children", "text", "line", "col")

    def __init__(self, tag, attrs, line, col):
        self.tag = tag
        self.attrs = attrs
        self.children = []
        self.text = ""
        self.line = line
        self.col = col

    def fail(self, reason):
        raise XacmlError(reason, self.line, self.col)

    def only(self, *allowed):
        for c in self.children:
            if c.tag not in allowed:
                c.fail(f"unexpected element <{c.tag}> inside <{self.tag}>")
        if allowed and self.text.strip():
            self.fail(f"unexpected text inside <{self.tag}>")

    def child(self, tag, required=True):
        found = [c for c in self.children if c.tag == tag]
        if len(found) > 1:
            found[1].fail(f"duplicate <{tag}> inside <{self.tag}>")
        if not found:
            if required:
                self.fail(f"missing <{tag}> inside <{self.tag}>")
            return None
        return found[0]

    def attr(self, name, required=True):
        if name in self.attrs:
            return self.attrs[name]
        if required:
            self.fail(f"<{self.tag}> lacks attribute {name}")
        return None

    def expect_attr(self, name, value):
        got = self.attr(name)
        if got != value:
            self.fail(f"<{self.tag}> {name}={got!r} unsupported (expected {value!r})")


def _local(name):
    return name.rsplit(":", 1)[-1] if ":" in name and not name.startswith("urn") else name


def _parse_xml(text):
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise XacmlError(f"document is not UTF-8 (byte {exc.start})") from None
    if not text or not text.strip():
        raise XacmlError("empty document", 1, 1)
    parser = expat.ParserCreate()
    stack = []
    roots = []

    def start(name, attrs):
        node = _Node(_local(name), attrs, parser.CurrentLineNumber, parser.CurrentColumnNumber + 1)
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)

    def end(name):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    def forbidden(*_args):
        raise XacmlError("DTD and entity declarations are not allowed",
                         parser.CurrentLineNumber, parser.CurrentColumnNumber + 1)

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    parser.StartDoctypeDeclHandler = forbidden
    parser.EntityDeclHandler = forbidden
    try:
        parser.Parse(text, True)
    except expat.ExpatError as exc:
        raise XacmlError(f"malformed XML: {expat.ErrorString(exc.code)}", exc.lineno, exc.offset + 1) from None
    return roots[0]


def _parse_uint(node, text=None):
    raw = (node.text if text is None else text).strip()
    if not raw.isascii() or not raw.isdigit():
        node.fail(f"expected a non-negative integer, got {raw!r}")
    value = int(raw)
    if value > U64_MAX:
        node.fail(f"integer {value} exceeds 64 bits")
    return value


def _attribute_value(node, datatype):
    node.only()
    dt = node.attr("DataType", required=False)
    if dt is not None and dt != datatype:
        node.fail(f"DataType {dt!r} unsupported here (expected {datatype!r})")
    return node.text


def _check_root(root, tag, extra_attrs):
    if root.tag != tag:
        root.fail(f"expected <{tag}> document, found <{root.tag}>")
    for name in root.attrs:
        if name != "xmlns" and not name.startswith("xmlns:") and name not in extra_attrs:
            root.fail(f"unsupported attribute {name} on <{tag}>")


# -- policies -------------------------------------------------------------------

def parse_policy(xml):
    root = _parse_xml(xml)
    _check_root(root, "Policy", {"PolicyId", "RuleCombiningAlgId", "Version"})
    policy_id = root.attr("PolicyId")
    alg = root.attr("RuleCombiningAlgId", required=False)
    if alg is not None and alg != FIRST_APPLICABLE:
        root.fail(f"rule combining algorithm {alg!r} unsupported")
    root.only("Description", "Target", "VariableDefinition", "Rule")

    desc_node = root.child("Description", required=False)
    description = desc_node.text.strip() if desc_node is not None else ""

    target = root.child("Target")
    target.only("Resources")
    resources = target.child("Resources")
    resources.only("Resource")
    resource = resources.child("Resource")
    resource.only("ResourceMatch")
    match = resource.child("ResourceMatch")
    match.expect_attr("MatchId", FN + "string-equal")
    match.only("AttributeValue", "ResourceAttributeDesignator")
    stream = _attribute_value(match.child("AttributeValue"), XS_STRING).strip()
    designator = match.child("ResourceAttributeDesignator")
    designator.only()
    designator.expect_attr("AttributeId", RESOURCE_ID)
    if not stream:
        match.fail("empty stream id in Target")

    window_size = None
    var = root.child("VariableDefinition", required=False)
    if var is not None:
        var.expect_attr("VariableId", WINDOW_VAR)
        var.only("AttributeValue")
        value_node = var.child("AttributeValue")
        window_size = _parse_uint(value_node, _attribute_value(value_node, XS_INTEGER))

    rules = [c for c in root.children if c.tag == "Rule"]
    if len(rules) != 1:
        root.fail(f"exactly one <Rule> supported, found {len(rules)}")
    rule = rules[0]
    rule.attr("RuleId")
    rule.expect_attr("Effect", "Permit")
    rule.only("Description", "Condition")
    cond = rule.child("Condition")
    cond.only("Apply")
    compare = cond.child("Apply")
    fn = compare.attr("FunctionId")
    if fn not in FUNCTION_OPS:
        compare.fail(f"unsupported comparison function {fn!r}")
    compare.only("Apply", "AttributeValue")
    inner = compare.child("Apply")
    inner.expect_attr("FunctionId", FN + "integer-one-and-only")
    inner.only("SubjectAttributeDesignator")
    subj = inner.child("SubjectAttributeDesignator")
    subj.only()
    subj.expect_attr("AttributeId", SUBJECT_KEY)
    if compare.children.index(inner) != 0:
        inner.fail("subject designator must be the first argument of the comparison")
    value_node = compare.child("AttributeValue")
    threshold = _parse_uint(value_node, _attribute_value(value_node, XS_INTEGER))

    op = FUNCTION_OPS[fn]
    if window_size is not None and op != "ge":
        compare.fail("window policies must use integer-greater-than-or-equal")
    try:
        return XacmlPolicy(policy_id, stream, op, threshold, window_size, description)
    except XacmlError as exc:
        root.fail(exc.reason)


def emit_policy(p):
    lines = [
        f'<Policy xmlns="{POLICY_NS}" PolicyId={quoteattr(p.policy_id)} RuleCombiningAlgId="{FIRST_APPLICABLE}">'
    ]
    if p.description:
        lines.append(f"  <Description>{escape(p.description)}</Description>")
    lines += [
        "  <Target>",
        "    <Resources>",
        "      <Resource>",
        f'        <ResourceMatch MatchId="{FN}string-equal">',
        f'          <AttributeValue DataType="{XS_STRING}">{escape(p.stream)}</AttributeValue>',
        f'          <ResourceAttributeDesignator AttributeId="{RESOURCE_ID}" DataType="{XS_STRING}"/>',
        "        </ResourceMatch>",
        "      </Resource>",
        "    </Resources>",
        "  </Target>",
    ]
    if p.window_size is not None:
        lines += [
            f'  <VariableDefinition VariableId="{WINDOW_VAR}">',
            f'    <AttributeValue DataType="{XS_INTEGER}">{p.window_size}</AttributeValue>',
            "  </VariableDefinition>",
        ]
    lines += [
        f"  <Rule RuleId={quoteattr(p.policy_id + ':rule')} Effect=\"Permit\">",
        "    <Condition>",
        f'      <Apply FunctionId="{OP_FUNCTIONS[p.op]}">',
        f'        <Apply FunctionId="{FN}integer-one-and-only">',
        f'          <SubjectAttributeDesignator AttributeId="{SUBJECT_KEY}" DataType="{XS_INTEGER}"/>',
        "        </Apply>",
        f'        <AttributeValue DataType="{XS_INTEGER}">{p.threshold}</AttributeValue>',
        "      </Apply>",
        "    </Condition>",
        "  </Rule>",
        "</Policy>",
    ]
    return "\n".join(lines) + "\n"


# -- requests -------------------------------------------------------------------

def emit_request(stream, k):
    if not (0 <= k <= U64_MAX):
        raise XacmlError(f"key {k} outside u64")
    return (
        f'<Request xmlns="{CONTEXT_NS}">\n'
        "  <Subject>\n"
        f'    <Attribute AttributeId="{SUBJECT_KEY}" DataType="{XS_INTEGER}">\n'
        f"      <AttributeValue>{k}</AttributeValue>\n"
        "    </Attribute>\n"
        "  </Subject>\n"
        "  <Resource>\n"
        f'    <Attribute AttributeId="{RESOURCE_ID}" DataType="{XS_STRING}">\n'
        f"      <AttributeValue>{escape(stream)}</AttributeValue>\n"
        "    </Attribute>\n"
        "  </Resource>\n"
        "  <Action/>\n"
        "</Request>\n"
    )


def _request_attribute(section, attr_id, datatype):
    section.only("Attribute")
    attrs = [a for a in section.children if a.attrs.get("AttributeId") == attr_id]
    if len(attrs) != 1:
        section.fail(f"<{section.tag}> needs exactly one attribute {attr_id}")
    attr = attrs[0]
    dt = attr.attr("DataType", required=False)
    if dt is not None and dt != datatype:
        attr.fail(f"DataType {dt!r} unsupported (expected {datatype!r})")
    attr.only("AttributeValue")
    value = attr.child("AttributeValue")
    value.only()
    return value


def parse_request(xml):
    root = _parse_xml(xml)
    _check_root(root, "Request", set())
    root.only("Subject", "Resource", "Action", "Environment")
    k_node = _request_attribute(root.child("Subject"), SUBJECT_KEY, XS_INTEGER)
    k = _parse_uint(k_node)
    stream = _request_attribute(root.child("Resource"), RESOURCE_ID, XS_STRING).text.strip()
    return XacmlRequest(stream, k)


# -- store and decision point ---------------------------------------------------

class PolicyStore:
    """Policies bucketed by stream id plus the grant table.

    Readers work on immutable snapshots, so :meth:`evaluate` never blocks on
    or observes a half-applied write; writers serialize on one lock.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._policies = {}  # policy id -> XacmlPolicy
        self._buckets = {}  # stream -> tuple of policies sorted by id
        self._grants = {}  # policy id -> {user id: transform key ref}

    def __len__(self):
        return len(self._policies)

    def get(self, policy_id):
        try:
            return self._policies[policy_id]
        except KeyError:
            raise StoreError(f"unknown policy {policy_id!r}") from None

    def policies(self, stream=None):
        if stream is None:
            return tuple(sorted(self._policies.values(), key=lambda p: p.policy_id))
        return self._buckets.get(stream, ())

    def register_policy(self, policy):
        if isinstance(policy, str):
            policy = parse_policy(policy)
        with self._lock:
            if policy.policy_id in self._policies:
                raise StoreError(f"duplicate policy id {policy.policy_id!r}")
            policies = dict(self._policies)
            policies[policy.policy_id] = policy
            buckets = dict(self._buckets)
            bucket = list(buckets.get(policy.stream, ())) + [policy]
            buckets[policy.stream] = tuple(sorted(bucket, key=lambda p: p.policy_id))
            grants = dict(self._grants)
            grants[policy.policy_id] = {}
            self._policies, self._buckets, self._grants = policies, buckets, grants
        return policy

    def register_grant(self, policy_id, user_id, tk_ref=None):
        """Record that ``user_id`` holds a transform key for the policy (idempotent)."""
        with self._lock:
            if policy_id not in self._policies:
                raise StoreError(f"grant to unknown policy {policy_id!r}")
            grants = dict(self._grants)
            users = dict(grants[policy_id])
            users[user_id] = tk_ref
            grants[policy_id] = users
            self._grants = grants

    def grants(self, policy_id):
        return dict(self._grants.get(policy_id, {}))

    def evaluate(self, req, include_not_applicable=False):
        """Decisions for ``req``, ordered by policy id.

        Policies targeting the request's stream yield Permit or Deny; the
        others are NotApplicable and only listed when asked for.
        """
        if isinstance(req, (str, bytes)):
            req = parse_request(req)
        buckets, grants = self._buckets, self._grants
        k = req.k
        out = []
        for p in buckets.get(req.stream, ()):
            if p.holds(k):
                out.append(Decision(p.policy_id, Verdict.PERMIT, tuple(sorted(grants[p.policy_id]))))
            else:
                out.append(Decision(p.policy_id, Verdict.DENY))
        if include_not_applicable:
            out += [
                Decision(p.policy_id, Verdict.NOT_APPLICABLE)
                for s, bucket in buckets.items() if s != req.stream
                for p in bucket
            ]
            out.sort(key=lambda d: d.policy_id)
        return out

    def permitted(self, req):
        """``[(policy, users)]`` for Permit verdicts only."""
        return [(self._policies[d.policy_id], d.users) for d in self.evaluate(req) if d.verdict is Verdict.PERMIT]


def evaluate(store, req):
    return store.evaluate(req)
