"""Optional pretrained-model captioning.

Kept isolated so the mock mode (and every test that matters for CI) runs
without model weights, torch, or transformers installed.
"""

from __future__ import annotations

from PIL import Image

DEFAULT_MODEL = "Salesforce/blip-image-captioning-base"


class ModelCaptioner:
    """Wraps a pretrained image-captioning model; imports lazily."""

    def __init__(self, model_id: str = DEFAULT_MODEL):
        try:
            import torch
            from transformers import BlipForConditionalGeneration, BlipProcessor
        except ImportError as exc:
            raise RuntimeError(
                "model mode requires the [model] extra (transformers + torch)"
            ) from exc
        self._torch = torch
        self.model_id = model_id
        self._processor = BlipProcessor.from_pretrained(model_id)
        self._model = BlipForConditionalGeneration.from_pretrained(model_id)
        self._model.eval()

    def caption(self, image: Image.Image) -> tuple[str, float]:
        """Caption one image; confidence is the geometric mean token
        probability of the generated sequence."""
        torch = self._torch
        inputs = self._processor(images=image, return_tensors="pt")
        with torch.no_grad():
            out = self._model.generate(
                **inputs,
                max_new_tokens=40,
                output_scores=True,
                return_dict_in_generate=True,
            )
        text = self._processor.decode(out.sequences[0], skip_special_tokens=True).strip()
        scores = self._model.compute_transition_scores(
            out.sequences, out.scores, normalize_logits=True
        )
        confidence = float(torch.exp(scores[0].mean()).clamp(0.0, 1.0))
        return text, confidence
