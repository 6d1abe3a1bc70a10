# %% [markdown]
# # Assembling a prompt
#
# A prompt is an instruction, up to k reference snippets in rank order, and
# the code to optimise. Two optional steps shape the code: keeping only the
# main loop nest, and inserting `// add pragma lines here` markers.

# %%
from pathlib import Path

from hlsrag.prompt import PromptSpec, build_prompt, build_prompt_fitting, extract_main_body, prepare_query

REPO = Path(__file__).resolve().parent.parent
FIR = (REPO / "tests" / "data" / "queries" / "fir.c").read_text()

# %%
ext = extract_main_body(FIR)
print(ext.status, f"{ext.loops} loop(s)")
print(ext.body)

# %% [markdown]
# Automatic markers go before every loop header and at the top of every
# loop body: two per loop.

# %%
q = prepare_query(FIR, annotate="auto-before-loops")
print(q.text)
print("marker lines:", q.annotation_positions)

# %%
refs = (
    ("pp4f/fir.md#3", "Unrolling the MAC loop:\n#pragma HLS UNROLL"),
    ("pp4f/fir.md#4", "Partition shift_reg so every tap is a register:\n#pragma HLS ARRAY_PARTITION"),
)
print(build_prompt(PromptSpec(retrieved=refs, query=q)))

# %% [markdown]
# When a length budget is set, the lowest-ranked references are dropped
# until the prompt fits.

# %%
text, fitted = build_prompt_fitting(PromptSpec(retrieved=refs, query=q, max_prompt_chars=600))
print(len(text), "chars, kept", [cid for cid, _ in fitted.retrieved])
