from pathlib import Path

from ...explain import DEFAULT_LAYER, DEFAULT_OPACITY, grad_cam, overlay
from ...network import load_checkpoint
from ...utils import encode_image
from ..base import AestheticsCommand


class Command(AestheticsCommand):
    help = "Write Grad-CAM overlays for images at one or more backbone layers."

    requires_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--images", nargs="+", required=True)
        parser.add_argument(
            "--layer",
            nargs="+",
            default=[DEFAULT_LAYER],
            help="Convolution layer name(s), e.g. block4_conv3 block5_conv3",
        )
        parser.add_argument("--output-index", type=int, default=0, help="0 = overall, k = k-th attribute")
        parser.add_argument("--opacity", type=float, default=DEFAULT_OPACITY)
        parser.add_argument("--output", default="gradcam", help="Directory for overlays")

    def run(self, **options):
        checkpoint = load_checkpoint(options["checkpoint"])
        net = checkpoint.network
        output = Path(options["output"])
        index = options["output_index"]
        target = checkpoint.target_names[index] if 0 <= index < len(checkpoint.target_names) else index

        written = 0
        for image_path in options["images"]:
            image = encode_image(image_path, net.input_size).unsqueeze(0)
            for layer in options["layer"]:
                activation_map = grad_cam(net, image, output_index=index, layer=layer, source=image_path)
                path = overlay(
                    activation_map,
                    image_path,
                    output / f"{Path(image_path).stem}_{layer}_{index}.png",
                    opacity=options["opacity"],
                )
                self.stdout.write(f"{path} ({target}, max {activation_map.raw_max:.4g})")
                written += 1
        self.stdout.write(self.style.SUCCESS(f"Wrote {written} overlay(s) to {output}"))
