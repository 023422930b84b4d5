# Link chain components: LoRa modem, STBC codes, fading channel
