//! Regenerates the replay cassettes under `tests/fixtures/` by running the
//! full pipeline against a scripted backend and recording every exchange.
//!
//! cargo run --example record_cassettes

use std::path::{Path, PathBuf};
use std::sync::Arc;

use aegis::llm::{load_cassette, ChatRequest, LlmClient, RecordingBackend, ScriptedBackend, Stage};
use aegis::pipeline::{run_sample, PipelineConfig, SampleInput};

struct Reply {
    line: u32,
    verifier: &'static [&'static str],
    audit: &'static str,
}

struct Scenario {
    name: &'static str,
    file: &'static str,
    function: &'static str,
    discovery: &'static str,
    expand: &'static [&'static str],
    replies: &'static [Reply],
}

const GRE_ERR_DISCOVERY: &str = r#"Two lines in the error handler read packet memory at attacker-influenced offsets.

```json
[
  {
    "line_number": 397,
    "code_line": "*(((__be32 *)p) + (grehlen / 4) - 1) : 0,",
    "suspicion_reason": "Key field read at p + grehlen - 4, where p already sits offset bytes into skb->data but only grehlen bytes were pulled.",
    "confidence_score": 0.8
  },
  {
    "line_number": 373,
    "code_line": "__be16 *p = (__be16 *)(skb->data + offset);",
    "suspicion_reason": "Header pointer derived from the ICMP offset and dereferenced before any length check.",
    "confidence_score": 0.7
  }
]
```"#;

const GRE_ERR_VERIFY_397: &str = r#"<thinking>
Phase 1. p is skb->data + offset. grehlen starts at offset + 4 and grows by 4 for GRE_KEY and by 4 more for GRE_CSUM. pskb_may_pull(skb, grehlen) guarantees grehlen linear bytes measured from skb->data. The key is read as a 32-bit word at byte p + grehlen - 4, i.e. skb->data + offset + grehlen - 4.

Phase 2A. With GRE_KEY and GRE_CSUM set, grehlen = offset + 12 and the read ends at skb->data + 2 * offset + 12. Only offset + 12 bytes are guaranteed, so any nonzero offset reads past the pulled region. offset comes from the ICMPv6 error payload, which a remote sender controls.

Phase 2B. The pull check is the only guard on this path. It does bound the buffer, but against the wrong base: it ignores that p already includes offset. No caller in the trace clamps offset.

Phase 2C. The defence holds only when offset is zero, which the trace does not establish. The prosecution argument cites concrete lines for every step.

Phase 3. The key read at line 397 exceeds the validated length by offset bytes. This is an out-of-bounds read.
</thinking>

```json
{
  "verdict": "VULNERABLE",
  "confidence": 0.88,
  "cwe_id": "CWE-125",
  "vulnerability_type": "Out-of-bounds read of the GRE key",
  "key_evidence": "ip6_gre.c:389 pulls grehlen bytes from skb->data, but ip6_gre.c:397 reads at skb->data + offset + grehlen - 4."
}
```"#;

const GRE_ERR_AUDIT_397: &str = r#"<audit_reasoning>
The verifier measured the pulled length and the read address from the same base and found the mismatch of offset bytes. Each step cites a line in the trace. The defence relied on the pull check, which the verifier correctly showed to be computed against skb->data rather than p. No speculative caller behaviour was used. I find no material flaw.
</audit_reasoning>

```json
{
  "audit_verdict": "AGREE",
  "original_verdict": "VULNERABLE",
  "final_verdict": "VULNERABLE",
  "confidence": 0.95,
  "audit_rationale": "The length check and the read use different bases, and the trace shows it directly.",
  "reasoning_flaws_found": []
}
```"#;

const GRE_ERR_VERIFY_373: &str = r#"<thinking>
Phase 1. Line 373 only forms a pointer; nothing is dereferenced on that line.

Phase 2A. The first dereference, p[0] at line 378, happens before the pull, so it relies on the ICMP layer having pulled the inner header start.

Phase 2B. The caller only dispatches here after the inner IPv6 header and the first GRE word are in the linear area.

Phase 2C. The pointer arithmetic by itself cannot fault; the risky dereference is the later key read, which is a separate clue.

Phase 3. This line is not the defect.
</thinking>

```json
{
  "verdict": "NOT_VULNERABLE",
  "confidence": 0.7,
  "cwe_id": null,
  "vulnerability_type": null,
  "key_evidence": "ip6_gre.c:373 computes an address without reading memory."
}
```"#;

const GRE_ERR_AUDIT_373: &str = r#"<audit_reasoning>
The verifier separated address formation from the later dereference and did not claim any check that is absent. The conclusion follows from the cited line.
</audit_reasoning>

```json
{
  "audit_verdict": "AGREE",
  "original_verdict": "NOT_VULNERABLE",
  "final_verdict": "NOT_VULNERABLE",
  "confidence": 0.8,
  "audit_rationale": "Forming the pointer is harmless on its own.",
  "reasoning_flaws_found": []
}
```"#;

const FPGA_CQ_DISCOVERY: &str = r#"The allocation size is computed from a page count taken from the queue buffer.

```json
[
  {
    "line_number": 460,
    "code_line": "in = kvzalloc(inlen, GFP_KERNEL);",
    "suspicion_reason": "Allocation size inlen is derived from npages; an overflow would yield a short buffer.",
    "confidence_score": 0.7
  },
  {
    "line_number": 458,
    "code_line": "inlen = MLX5_ST_SZ_BYTES(create_cq_in) +",
    "suspicion_reason": "Multiplication of sizeof(u64) by npages without an explicit bound.",
    "confidence_score": 0.6
  }
]
```"#;

const FPGA_CQ_VERIFY_460: &str = r#"<thinking>
Phase 1. inlen = MLX5_ST_SZ_BYTES(create_cq_in) + sizeof(u64) * npages, then in = kvzalloc(inlen). The buffer and inlen are passed to mlx5_core_create_cq, which copies the command using inlen.

Phase 2A. npages is an int. No check on npages is visible in this function before the multiplication, so a large value could wrap inlen and leave a buffer too small for the page array that mlx5_fill_page_frag_array writes.

Phase 2B. npages comes from mlx5_cqwq_create, sized by cq_size, which this function derives from a driver constant. Nothing in the trace lets an outside party choose it.

Phase 2C. The prosecution depends on npages being large, and the trace does not show where that could happen. Still, no bound is visible.

Phase 3. I lean towards an integer overflow in the size computation.
</thinking>

```json
{
  "verdict": "VULNERABLE",
  "confidence": 0.75,
  "cwe_id": "CWE-190",
  "vulnerability_type": "Integer overflow in allocation size",
  "key_evidence": "conn.c:458 multiplies npages without a visible bound before conn.c:460 allocates inlen bytes."
}
```"#;

const FPGA_CQ_AUDIT_460: &str = r#"<audit_reasoning>
The verifier found no upper bound on npages and treated that absence as proof of overflow. The trace shows the value originates from a queue sized by a fixed driver constant, so it cannot approach the range needed to wrap. The verifier also assumed that an attacker could influence npages without any line in the trace supporting it. Both points decide the outcome.
</audit_reasoning>

```json
{
  "audit_verdict": "DISAGREE",
  "original_verdict": "VULNERABLE",
  "final_verdict": "NOT_VULNERABLE",
  "confidence": 0.70,
  "audit_rationale": "The overflow needs an npages value the traced sizing cannot produce.",
  "reasoning_flaws_found": ["Absence-as-Evidence Flaw", "Speculation Flaw"]
}
```"#;

const FPGA_CQ_VERIFY_458: &str = r#"<thinking>
Phase 1. Line 458 sums a constant command size with sizeof(u64) times npages.

Phase 2A. The product could wrap only for a page count near 2^61.

Phase 2B. npages is bounded by the fixed queue size set earlier in this function.

Phase 2C. The bound is concrete and visible in the trace.

Phase 3. The arithmetic is safe for every reachable npages.
</thinking>

```json
{
  "verdict": "NOT_VULNERABLE",
  "confidence": 0.8,
  "cwe_id": null,
  "vulnerability_type": null,
  "key_evidence": "conn.c:458 multiplies a page count bounded by the fixed queue size."
}
```"#;

const FPGA_CQ_AUDIT_458: &str = r#"<audit_reasoning>
The verifier relied on the traced queue sizing and did not invent a check. The conclusion holds.
</audit_reasoning>

```json
{
  "audit_verdict": "AGREE",
  "original_verdict": "NOT_VULNERABLE",
  "final_verdict": "NOT_VULNERABLE",
  "confidence": 0.8,
  "audit_rationale": "The page count is bounded by the queue size shown in the trace.",
  "reasoning_flaws_found": []
}
```"#;

const PCL_DELEGATE_DISCOVERY: &str = r#"```json
[
  {
    "line_number": 170,
    "code_line": "(void) FormatLocaleString(command,MagickPathExtent,commands,",
    "suspicion_reason": "The format string is the delegate command text returned by another module.",
    "confidence_score": 0.8
  }
]
```"#;

const PCL_DELEGATE_VERIFY_BAD: &str = "```json\n{\"verdict\": \"VULNERABLE\", \"confidence\": 0.8, \"cwe_id\": \"CWE-134\", \"vulnerability_type\": \"\u{683c}\u{5f0f}\u{5316}\u{5b57}\u{7b26}\u{4e32}\", \"key_evidence\": \"pcl.c:170\"}\n```";

const PCL_DELEGATE_VERIFY: &str = r#"<thinking>
Phase 1. commands is returned by GetDelegateCommands and passed as the format argument of FormatLocaleString at pcl.c:170.

Phase 2A. GetDelegateCommands returns delegate_info->commands, which is read from the delegate configuration file. Any conversion specifier in that text is interpreted with the five arguments supplied here.

Phase 2B. The command template is expected to contain exactly the specifiers that match those arguments, and the configuration is normally trusted.

Phase 2C. The trace shows no validation of the template between delegate.c:1189 and pcl.c:170, so a modified configuration controls the format.

Phase 3. The format string is external data used without sanitisation.
</thinking>

```json
{
  "verdict": "VULNERABLE",
  "confidence": 0.8,
  "cwe_id": "CWE-134",
  "vulnerability_type": "Externally controlled format string",
  "key_evidence": "delegate.c:1189 returns the configured command text, used as the format at pcl.c:170."
}
```"#;

const PCL_DELEGATE_AUDIT: &str = r#"<audit_reasoning>
The verifier followed the format argument across the module boundary and cited both ends. It did not claim a sanitiser that is missing or rely on an unseen caller.
</audit_reasoning>

```json
{
  "audit_verdict": "AGREE",
  "original_verdict": "VULNERABLE",
  "final_verdict": "VULNERABLE",
  "confidence": 0.85,
  "audit_rationale": "The traced command text reaches the format parameter unchecked.",
  "reasoning_flaws_found": []
}
```"#;

const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "gre_err",
        file: "ipv6/ip6_gre.c",
        function: "ip6gre_err",
        discovery: GRE_ERR_DISCOVERY,
        expand: &["pskb_may_pull", "ip6_tnl_parse_tlv_enc_lim"],
        replies: &[
            Reply {
                line: 397,
                verifier: &[GRE_ERR_VERIFY_397],
                audit: GRE_ERR_AUDIT_397,
            },
            Reply {
                line: 373,
                verifier: &[GRE_ERR_VERIFY_373],
                audit: GRE_ERR_AUDIT_373,
            },
        ],
    },
    Scenario {
        name: "fpga_cq",
        file: "fpga/conn.c",
        function: "mlx5_fpga_conn_create_cq",
        discovery: FPGA_CQ_DISCOVERY,
        expand: &["mlx5_core_create_cq"],
        replies: &[
            Reply {
                line: 460,
                verifier: &[FPGA_CQ_VERIFY_460],
                audit: FPGA_CQ_AUDIT_460,
            },
            Reply {
                line: 458,
                verifier: &[FPGA_CQ_VERIFY_458],
                audit: FPGA_CQ_AUDIT_458,
            },
        ],
    },
    Scenario {
        name: "pcl_delegate",
        file: "coders/pcl.c",
        function: "InvokePCLDelegate",
        discovery: PCL_DELEGATE_DISCOVERY,
        expand: &["GetDelegateCommands"],
        replies: &[Reply {
            line: 170,
            verifier: &[PCL_DELEGATE_VERIFY_BAD, PCL_DELEGATE_VERIFY],
            audit: PCL_DELEGATE_AUDIT,
        }],
    },
];

fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mentions_line(request: &ChatRequest, line: u32) -> bool {
    request.user.contains(&format!("\nLine: {line}\n"))
}

fn backend_for(s: &'static Scenario) -> ScriptedBackend {
    let verify_calls = std::sync::Mutex::new(std::collections::HashMap::<u32, usize>::new());
    ScriptedBackend::empty().with_responder(move |req| match req.stage {
        Stage::Discovery => Some(s.discovery.to_string()),
        Stage::Expansion => {
            let yes = s
                .expand
                .iter()
                .any(|f| req.user.contains(&format!("external function `{f}`")));
            Some(if yes { "YES" } else { "NO" }.to_string())
        }
        Stage::Verification => {
            let r = s.replies.iter().find(|r| mentions_line(req, r.line))?;
            let mut calls = verify_calls.lock().unwrap();
            let n = calls.entry(r.line).or_insert(0);
            let text = r.verifier[(*n).min(r.verifier.len() - 1)];
            *n += 1;
            Some(text.to_string())
        }
        Stage::Audit => {
            let r = s.replies.iter().find(|r| mentions_line(req, r.line))?;
            Some(r.audit.to_string())
        }
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for s in SCENARIOS {
        let dir = fixture_dir(s.name);
        let recorder = Arc::new(RecordingBackend::new(backend_for(s)));
        let config = PipelineConfig::default();
        let client = LlmClient::new(recorder.clone(), &config.model);
        let input = SampleInput {
            sample_id: s.name.to_string(),
            repo_root: dir.join("repo"),
            file: s.file.to_string(),
            function: s.function.to_string(),
        };
        let recorded = run_sample(&input, &config, &client)?;
        let path = dir.join("cassette.json");
        let cassette = recorder.cassette();
        cassette.save(&path)?;

        let replay = Arc::new(load_cassette(&path)?);
        let replayed = run_sample(&input, &config, &LlmClient::new(replay, &config.model))?;
        assert_eq!(recorded.verdict.to_json(), replayed.verdict.to_json());
        println!(
            "{}: {} exchanges, verdict {:?} -> {}",
            s.name,
            cassette.entries.len(),
            replayed.verdict.verdict,
            path.display()
        );
    }
    Ok(())
}
