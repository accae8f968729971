"""flowlens: live dataflow graphs for streaming dataframe-analysis code.

The pipeline turns a character stream of analysis code into a typed
node-link diagram bound to runtime table states:

    stream  ->  statements  ->  syntax trees  ->  operations  ->  diagram
                                            \\->  instrumented units -> sandbox

and lets a human steer the run through byte-exact source patches and
snippet re-runs.
"""

from .edits import CodePatch, ParamEdit, RevisionPair, apply_llm_rewrite, apply_param_edit
from .extract import (
    Operation,
    OperationKind,
    Param,
    ResultKind,
    TableRegistry,
    classify_call,
    extract_operations,
)
from .graph import (
    BindOutcome,
    Diagram,
    EdgeKind,
    GraphDelta,
    NodeState,
    OperationNode,
    ResultNode,
    TableNode,
    TableState,
)
from .instrument import (
    ExecUnit,
    InstrumentedProgram,
    Instrumenter,
    PROBE_SENTINEL,
    plan_probes,
    split_chains,
)
from .llm import LlmClientConfig, LiveLlmClient, ReplayLlmClient, make_client
from .parsing import ChainLink, NodeKind, ParseOutcome, SyntaxNode, chain_links, parse_statement
from .runner import ExecOutcome, ProbeRecord, SandboxRunner, demux_stdout
from .session import Session, SessionConfig, SnippetRecord
from .spans import LineIndex, Span
from .streaming import CodeChunk, SnippetBuffer, StatementUnit, split_statements

__version__ = "0.1.0"
